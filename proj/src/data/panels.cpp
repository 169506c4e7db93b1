#include "tmtsc/data/pipeline.hpp"

#include "tmtsc/errors.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <fstream>
#include <numeric>

namespace tmtsc {

using nlohmann::json;

std::string format_panel(const CompanyPanel& p) {
  json rows = json::array();
  for (Index t = 0; t < kSteps; ++t) {
    json row = json::array();
    for (Index k = 0; k < kFeatures; ++k) row.push_back(p.X(t, k));
    rows.push_back(std::move(row));
  }
  json mask = json::array();
  for (Index t = 0; t < kSteps; ++t) mask.push_back(static_cast<int>(p.step_mask(t)));
  json j;
  j["company_id"] = p.company_id;
  j["investor_group_id"] = p.investor_group_id;
  j["label_vc"] = p.label_vc;
  j["label_gc"] = p.label_gc;
  j["X"] = std::move(rows);
  j["mask"] = std::move(mask);
  return j.dump();
}

CompanyPanel parse_panel(std::string_view line, std::size_t n) {
  auto fail = [n](const std::string& what) -> Error {
    return Error(ErrorKind::validation, fmt::format("panel line {}: {}", n, what));
  };
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, fmt::format("panel line {}: {}", n, e.what()));
  }
  CompanyPanel p;
  try {
    p.company_id = j.at("company_id").get<std::string>();
    p.investor_group_id = j.at("investor_group_id").get<std::string>();
    p.label_vc = j.at("label_vc").get<int>();
    p.label_gc = j.at("label_gc").get<int>();
    const json& X = j.at("X");
    const json& mask = j.at("mask");
    if (!X.is_array() || X.size() != kSteps) throw fail(fmt::format("X must have {} rows", kSteps));
    if (!mask.is_array() || mask.size() != kSteps) throw fail(fmt::format("mask must have {} entries", kSteps));
    for (Index t = 0; t < kSteps; ++t) {
      const json& row = X[static_cast<std::size_t>(t)];
      if (!row.is_array() || row.size() != kFeatures) throw fail(fmt::format("X row {} must have {} values", t, kFeatures));
      for (Index k = 0; k < kFeatures; ++k) p.X(t, k) = row[static_cast<std::size_t>(k)].get<double>();
      const int m = mask[static_cast<std::size_t>(t)].get<int>();
      if (m != 0 && m != 1) throw fail("mask entries must be 0 or 1");
      p.step_mask(t) = m;
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  if (p.step_mask.sum() == 0.0) throw fail(p.company_id + " has no observed step");
  return p;
}

void save_panels(const std::filesystem::path& path, std::span<const CompanyPanel> panels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& p : panels) out << format_panel(p) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

std::vector<CompanyPanel> load_panels(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::missing_file, "panel file not found: " + path.string());
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::vector<CompanyPanel> panels;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    panels.push_back(parse_panel(line, n));
  }
  return panels;
}

Batch make_batch(std::span<const CompanyPanel> panels, std::span<const std::size_t> indices, Task task) {
  const auto B = static_cast<Index>(indices.size());
  Batch batch;
  batch.X.resize(B * kSteps, kFeatures);
  batch.step_mask.resize(B, kSteps);
  batch.labels.reserve(indices.size());
  for (Index b = 0; b < B; ++b) {
    const CompanyPanel& p = panels[indices[static_cast<std::size_t>(b)]];
    batch.X.middleRows(b * kSteps, kSteps) = p.X;
    batch.step_mask.row(b) = p.step_mask;
    batch.labels.push_back(label_of(p, task));
  }
  return batch;
}

Batch make_batch(std::span<const CompanyPanel> panels, Task task) {
  std::vector<std::size_t> all(panels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(panels, all, task);
}

}  // namespace tmtsc
