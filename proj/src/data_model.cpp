#include "marktau/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace marktau {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::string row_error(std::size_t line_no, const std::string& what) {
  return "line " + std::to_string(line_no) + ": " + what;
}

double parse_number(std::string_view field, std::size_t line_no, const char* column) {
  double value = 0.0;
  // from_chars rejects a leading '+', accept it for convenience
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() ||
      !std::isfinite(value)) {
    throw DataError(row_error(line_no, std::string("non-numeric ") + column + " '" +
                                           std::string(field) + "'"));
  }
  return value;
}

int parse_indicator(std::string_view field, std::size_t line_no, const char* column) {
  double v = parse_number(field, line_no, column);
  if (v != 0.0 && v != 1.0) {
    throw DataError(row_error(line_no, std::string(column) + " must be 0 or 1, got '" +
                                           std::string(field) + "'"));
  }
  return static_cast<int>(v);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t Dataset::event_count() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.delta == 1; }));
}

std::vector<double> Dataset::observed_marks() const {
  std::vector<double> marks;
  for (const auto& r : records) {
    if (r.delta == 1 && r.mark) marks.push_back(*r.mark);
  }
  return marks;
}

Dataset make_dataset(std::vector<SubjectRecord> records, std::optional<double> follow_up) {
  Dataset data;
  double max_y = 0.0;
  for (const auto& r : records) {
    if (r.arm == 1) {
      ++data.n1;
    } else if (r.arm == 0) {
      ++data.n0;
    } else {
      throw DataError("arm must be 0 or 1");
    }
    max_y = std::max(max_y, r.y);
  }
  if (data.n0 == 0) throw DataError("empty group: no records with a=0 (n0=0)");
  if (data.n1 == 0) throw DataError("empty group: no records with a=1 (n1=0)");
  data.records = std::move(records);
  data.follow_up = follow_up.value_or(max_y);
  data.pi_hat = static_cast<double>(data.n1) / static_cast<double>(data.n0 + data.n1);
  return data;
}

MarkInterval::MarkInterval(double lo, double hi) : lower(lo), upper(hi) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) {
    throw std::invalid_argument("mark interval must satisfy 0 <= lower < upper <= 1");
  }
}

ParseResult parse_dataset(std::string_view csv_text, const ParseOptions& options) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= csv_text.size()) return false;
    auto nl = csv_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = csv_text.size();
    line = csv_text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };

  std::string_view line;
  // Skip leading '#' comment lines and a UTF-8 BOM.
  do {
    if (!next_line(line)) throw DataError("empty input: missing header row");
    if (line_no == 1 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
  } while (!trim(line).empty() && trim(line).front() == '#');

  auto header = split_fields(line);
  int col_y = -1, col_delta = -1, col_mark = -1, col_a = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    int idx = static_cast<int>(i);
    if (header[i] == "y") col_y = idx;
    else if (header[i] == "delta") col_delta = idx;
    else if (header[i] == "mark") col_mark = idx;
    else if (header[i] == "a") col_a = idx;
    else throw DataError(row_error(line_no, "unknown column '" + std::string(header[i]) + "'"));
  }
  if (col_y < 0 || col_delta < 0 || col_a < 0) {
    throw DataError("header must contain y,delta,mark,a");
  }

  ParseResult result;
  std::vector<SubjectRecord> records;
  while (next_line(line)) {
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    // A trailing empty mark may be dropped entirely by some writers.
    bool short_mark = col_mark >= 0 && fields.size() + 1 == header.size() &&
                      col_mark == static_cast<int>(header.size()) - 1;
    if (fields.size() != header.size() && !short_mark) {
      throw DataError(row_error(line_no, "expected " + std::to_string(header.size()) +
                                             " fields, got " + std::to_string(fields.size())));
    }
    SubjectRecord rec;
    rec.y = parse_number(fields[col_y], line_no, "y");
    rec.delta = parse_indicator(fields[col_delta], line_no, "delta");
    rec.arm = parse_indicator(fields[col_a], line_no, "a");
    std::string_view mark_field;
    if (col_mark >= 0 && static_cast<std::size_t>(col_mark) < fields.size()) {
      mark_field = fields[col_mark];
    }
    if (rec.delta == 1) {
      if (mark_field.empty()) {
        if (options.drop_missing_marks) {
          ++result.dropped_rows;
          continue;
        }
        throw DataError(row_error(line_no, "mark absent with delta=1"));
      }
      rec.mark = parse_number(mark_field, line_no, "mark");
    } else if (!mark_field.empty()) {
      throw DataError(row_error(line_no, "mark present with delta=0"));
    }
    records.push_back(rec);
  }
  result.dataset = make_dataset(std::move(records));
  return result;
}

std::string serialize_dataset(const Dataset& data) {
  std::string out = "y,delta,mark,a\n";
  for (const auto& r : data.records) {
    out += format_double(r.y);
    out += r.delta == 1 ? ",1," : ",0,";
    if (r.mark) out += format_double(*r.mark);
    out += r.arm == 1 ? ",1\n" : ",0\n";
  }
  return out;
}

ScaledMarks scale_marks(std::span<const double> raw_marks) {
  if (raw_marks.empty()) throw std::invalid_argument("scale_marks: no observed marks");
  for (double v : raw_marks) {
    if (!std::isfinite(v)) throw std::invalid_argument("scale_marks: non-finite mark");
  }
  auto [lo, hi] = std::minmax_element(raw_marks.begin(), raw_marks.end());
  ScaledMarks out;
  out.scaling.min = *lo;
  out.scaling.max = *hi;
  out.scaling.degenerate = !(*hi > *lo);
  out.values.reserve(raw_marks.size());
  for (double v : raw_marks) out.values.push_back(apply_scaling(v, out.scaling));
  return out;
}

double apply_scaling(double raw, const ScalingRecord& scaling) {
  if (scaling.degenerate || !(scaling.max > scaling.min)) return 0.5;
  return (raw - scaling.min) / (scaling.max - scaling.min);
}

Dataset rescale_dataset(const Dataset& data, const ScalingRecord& scaling) {
  Dataset out = data;
  for (auto& r : out.records) {
    if (r.mark) r.mark = apply_scaling(*r.mark, scaling);
  }
  return out;
}

ValidationReport validate(const Dataset& data) {
  ValidationReport report;
  std::size_t n0 = 0, n1 = 0;
  double max_y = 0.0;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (!(std::isfinite(r.y) && r.y >= 0.0)) report.push_back({i, "y ≥ 0"});
    if (r.delta != 0 && r.delta != 1) report.push_back({i, "delta ∈ {0,1}"});
    if (r.arm != 0 && r.arm != 1) report.push_back({i, "a ∈ {0,1}"});
    if (r.delta == 1 && !r.mark) report.push_back({i, "mark present iff delta = 1"});
    if (r.delta != 1 && r.mark) report.push_back({i, "mark present iff delta = 1"});
    if (r.mark && !(*r.mark >= 0.0 && *r.mark <= 1.0)) report.push_back({i, "mark ∈ [0,1]"});
    if (r.arm == 1) ++n1;
    if (r.arm == 0) ++n0;
    if (std::isfinite(r.y)) max_y = std::max(max_y, r.y);
  }
  if (n0 == 0) report.push_back({kDatasetLevel, "n0 ≥ 1"});
  if (n1 == 0) report.push_back({kDatasetLevel, "n1 ≥ 1"});
  if (n0 != data.n0 || n1 != data.n1 || n0 + n1 != data.records.size()) {
    report.push_back({kDatasetLevel, "n0 + n1 = number of records"});
  }
  if (!(data.follow_up >= max_y)) report.push_back({kDatasetLevel, "follow_up ≥ max y"});
  if (!(data.pi_hat > 0.0 && data.pi_hat < 1.0)) {
    report.push_back({kDatasetLevel, "0 < pi_hat < 1"});
  } else if (n0 + n1 > 0 &&
             data.pi_hat != static_cast<double>(n1) / static_cast<double>(n0 + n1)) {
    report.push_back({kDatasetLevel, "pi_hat = n1/(n0+n1)"});
  }
  return report;
}

DatasetMetadata parse_metadata(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metadata: ") + e.what());
  }
  if (!j.is_object()) throw DataError("metadata: expected a JSON object");
  DatasetMetadata meta;
  if (j.contains("follow_up")) {
    if (!j["follow_up"].is_number()) throw DataError("metadata: follow_up must be a number");
    meta.follow_up = j["follow_up"].get<double>();
  }
  if (j.contains("mark_scaling")) {
    const auto& ms = j["mark_scaling"];
    MarkScaling scaling;
    if (ms.is_string() && ms.get<std::string>() == "auto") {
      scaling.mode = ScalingMode::automatic;
    } else if (ms.is_object() && ms.contains("min") && ms.contains("max") &&
               ms["min"].is_number() && ms["max"].is_number()) {
      scaling.mode = ScalingMode::fixed;
      scaling.fixed.min = ms["min"].get<double>();
      scaling.fixed.max = ms["max"].get<double>();
      if (!(scaling.fixed.max > scaling.fixed.min)) {
        throw DataError("metadata: mark_scaling requires max > min");
      }
    } else {
      throw DataError("metadata: mark_scaling must be \"auto\" or {\"min\":..,\"max\":..}");
    }
    meta.mark_scaling = scaling;
  }
  return meta;
}

}  // namespace marktau
