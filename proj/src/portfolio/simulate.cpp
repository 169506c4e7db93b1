#include "tmtsc/portfolio/simulate.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/evaluation/report.hpp"
#include "tmtsc/io.hpp"
#include "tmtsc/numerics/rng.hpp"

#include <fmt/format.h>

#include <numeric>
#include <sstream>

namespace tmtsc {

using nlohmann::json;

ReferenceLine growth_capital_reference() { return {"real-world GC success rate", std::nullopt, 0.863}; }

void SimConfig::validate() const {
  if (portfolio_sizes.empty()) throw Error(ErrorKind::configuration, "no portfolio sizes");
  for (int s : portfolio_sizes) {
    if (s < 1) throw Error(ErrorKind::configuration, fmt::format("portfolio size {} must be >= 1", s));
  }
  if (n_repeats < 1) throw Error(ErrorKind::configuration, "n_repeats must be >= 1");
}

std::vector<double> positive_pool(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::dimension, fmt::format("{} scores for {} labels", scores.size(), labels.size()));
  }
  std::vector<double> pool;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) pool.push_back(scores[i]);
  }
  return pool;
}

namespace {

// First k entries of a partial Fisher-Yates shuffle of 0..n-1.
void draw(Rng& rng, std::vector<std::size_t>& idx, std::size_t k) {
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_int(static_cast<std::uint64_t>(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
}

}  // namespace

SimResult simulate(std::span<const PoolScores> models, const SimConfig& config, bool paired) {
  config.validate();
  SimResult result;
  result.references = config.references;
  if (models.empty()) return result;
  const std::size_t pool = models.front().scores.size();
  for (const auto& m : models) {
    if (m.scores.size() != pool) {
      throw Error(ErrorKind::dimension,
                  fmt::format("model {} scores {} companies, expected {}", m.model, m.scores.size(), pool));
    }
  }
  for (int size : config.portfolio_sizes) {
    if (static_cast<std::size_t>(size) > pool) {
      throw Error(ErrorKind::infeasible_size,
                  fmt::format("portfolio size {} exceeds the {} positively labeled companies", size, pool));
    }
  }

  const Rng base(config.seed);
  std::vector<std::size_t> idx(pool);
  for (std::size_t m = 0; m < models.size(); ++m) {
    const Rng model_base = paired ? base.derive(0) : base.derive(m + 1);
    for (std::size_t s = 0; s < config.portfolio_sizes.size(); ++s) {
      const auto k = static_cast<std::size_t>(config.portfolio_sizes[s]);
      SimCell cell;
      cell.model = models[m].model;
      cell.portfolio_size = config.portfolio_sizes[s];
      for (int r = 0; r < config.n_repeats; ++r) {
        Rng rng = model_base.derive((static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(r));
        draw(rng, idx, k);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < k; ++i) hits += models[m].scores[idx[i]] >= config.threshold;
        cell.rates.push_back(static_cast<double>(hits) / static_cast<double>(k));
      }
      const Summary sum = summarize(cell.rates);
      cell.mean = sum.mean;
      cell.std = sum.std;
      result.cells.push_back(std::move(cell));
    }
  }
  return result;
}

void export_sim_csv(const SimResult& result, const std::filesystem::path& path) {
  std::string out = "model,portfolio_size,mean,std\n";
  for (const auto& c : result.cells) out += fmt::format("{},{},{},{}\n", c.model, c.portfolio_size, c.mean, c.std);
  write_file_atomic(path, out);
}

std::vector<SimCell> read_sim_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "model,portfolio_size,mean,std") {
    throw Error(ErrorKind::parse, path.string() + ": unexpected header");
  }
  std::vector<SimCell> cells;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 4) throw Error(ErrorKind::parse, fmt::format("{}:{}: expected 4 fields", path.string(), line_number));
    SimCell c;
    c.model = fields[0];
    try {
      c.portfolio_size = std::stoi(fields[1]);
      c.mean = std::stod(fields[2]);
      c.std = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse, fmt::format("{}:{}: bad number", path.string(), line_number));
    }
    cells.push_back(std::move(c));
  }
  return cells;
}

json to_json(const SimResult& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"model", c.model}, {"portfolio_size", c.portfolio_size}, {"mean", c.mean}, {"std", c.std},
                     {"rates", c.rates}});
  }
  json refs = json::array();
  for (const auto& ref : r.references) {
    refs.push_back({{"label", ref.label},
                    {"portfolio_size", ref.portfolio_size ? json(*ref.portfolio_size) : json(nullptr)},
                    {"success_rate", ref.success_rate}});
  }
  return json{{"cells", cells}, {"references", refs}};
}

}  // namespace tmtsc
