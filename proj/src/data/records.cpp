#include "tmtsc/data/records.hpp"

#include "tmtsc/errors.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>

namespace tmtsc {

using nlohmann::json;

YearMonth parse_month(std::string_view text) {
  auto digits = [&](std::size_t from, std::size_t n) {
    for (std::size_t i = from; i < from + n; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
    }
    return true;
  };
  if (text.size() != 7 || text[4] != '-' || !digits(0, 4) || !digits(5, 2)) {
    throw Error(ErrorKind::parse, fmt::format("month '{}' is not YYYY-MM", text));
  }
  const YearMonth m{std::stoi(std::string(text.substr(0, 4))), std::stoi(std::string(text.substr(5, 2)))};
  if (m.month < 1 || m.month > 12) throw Error(ErrorKind::parse, fmt::format("month '{}' out of range", text));
  return m;
}

std::string format_month(YearMonth m) { return fmt::format("{:04d}-{:02d}", m.year, m.month); }

void validate_record(const RawCompanyRecord& r) {
  if (r.company_id.empty()) throw Error(ErrorKind::validation, "company_id: empty");
  if (r.investor_group_id.empty()) throw Error(ErrorKind::validation, r.company_id + ": investor_group_id empty");
  for (int label : {r.label_vc, r.label_gc}) {
    if (label != 0 && label != 1) throw Error(ErrorKind::validation, r.company_id + ": label must be 0 or 1");
  }
  const auto& schema = feature_schema();
  for (std::size_t i = 0; i < r.observations.size(); ++i) {
    const Observation& o = r.observations[i];
    if (i > 0 && !(r.observations[i - 1].month < o.month)) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}: observations.month not strictly increasing at {}", r.company_id, format_month(o.month)));
    }
    for (int k = 0; k < kFeatures; ++k) {
      if (!o.values[k]) continue;
      const double v = *o.values[k];
      if (schema[k].kind != FeatureKind::numeric) {
        throw Error(ErrorKind::validation, fmt::format("{}: {} must be a string", r.company_id, schema[k].name));
      }
      if (!std::isfinite(v) || v < 0.0) {
        throw Error(ErrorKind::validation,
                    fmt::format("{}: {} = {} is not a finite non-negative number", r.company_id, schema[k].name, v));
      }
    }
  }
}

namespace {

[[noreturn]] void field_error(std::size_t line, const std::string& what) {
  throw Error(ErrorKind::validation, line ? fmt::format("line {}: {}", line, what) : what);
}

const json& required(const json& obj, const char* key, std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end()) field_error(line, fmt::format("missing field '{}'", key));
  return *it;
}

int parse_label(const json& obj, const char* key, std::size_t line) {
  const json& v = required(obj, key, line);
  if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
    field_error(line, fmt::format("field '{}' must be 0 or 1", key));
  }
  return v.get<int>();
}

}  // namespace

RawCompanyRecord parse_record(std::string_view line, std::size_t line_number) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, fmt::format("line {}: {}", line_number, e.what()));
  }
  if (!j.is_object()) field_error(line_number, "record is not a JSON object");

  RawCompanyRecord r;
  const json& id = required(j, "company_id", line_number);
  if (!id.is_string()) field_error(line_number, "field 'company_id' must be a string");
  r.company_id = id.get<std::string>();
  const json& group = required(j, "investor_group_id", line_number);
  if (!group.is_string()) field_error(line_number, "field 'investor_group_id' must be a string");
  r.investor_group_id = group.get<std::string>();
  r.label_vc = parse_label(j, "label_vc", line_number);
  r.label_gc = parse_label(j, "label_gc", line_number);

  const json& obs = required(j, "observations", line_number);
  if (!obs.is_array()) field_error(line_number, "field 'observations' must be an array");
  for (const json& o : obs) {
    Observation ob;
    const json& month = required(o, "month", line_number);
    if (!month.is_string()) field_error(line_number, "field 'month' must be a string");
    try {
      ob.month = parse_month(month.get<std::string>());
    } catch (const Error& e) {
      throw Error(ErrorKind::validation, fmt::format("line {}: month: {}", line_number, e.what()));
    }
    const auto feats = o.find("features");
    if (feats != o.end()) {
      if (!feats->is_object()) field_error(line_number, "field 'features' must be an object");
      for (const auto& [name, value] : feats->items()) {
        const auto k = feature_index(name);
        if (!k) field_error(line_number, fmt::format("unknown feature '{}'", name));
        if (value.is_null()) continue;
        if (*k == feature::round_type) {
          if (!value.is_string()) field_error(line_number, "feature 'round_type' must be a string or null");
          ob.round_type = value.get<std::string>();
        } else {
          if (!value.is_number()) field_error(line_number, fmt::format("feature '{}' must be a number or null", name));
          ob.values[*k] = value.get<double>();
        }
      }
    }
    r.observations.push_back(std::move(ob));
  }
  try {
    validate_record(r);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("line {}: {}", line_number, e.what()));
  }
  return r;
}

std::string format_record(const RawCompanyRecord& r) {
  json obs = json::array();
  for (const Observation& o : r.observations) {
    json feats = json::object();
    for (int k = 0; k < kFeatures; ++k) {
      const std::string name(feature_schema()[k].name);
      if (k == feature::round_type) {
        feats[name] = o.round_type ? json(*o.round_type) : json(nullptr);
      } else {
        feats[name] = o.values[k] ? json(*o.values[k]) : json(nullptr);
      }
    }
    obs.push_back({{"month", format_month(o.month)}, {"features", std::move(feats)}});
  }
  json j;
  j["company_id"] = r.company_id;
  j["investor_group_id"] = r.investor_group_id;
  j["label_vc"] = r.label_vc;
  j["label_gc"] = r.label_gc;
  j["observations"] = std::move(obs);
  return j.dump();
}

std::vector<RawCompanyRecord> load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::missing_file, "dataset not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<RawCompanyRecord> records;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(parse_record(line, n));
  }
  return records;
}

void save_dataset(const std::filesystem::path& path, const std::vector<RawCompanyRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& r : records) out << format_record(r) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

}  // namespace tmtsc
