#include "run_manifest.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/io.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <ctime>

namespace tmtsc::cli {

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", tm);
}

}  // namespace

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)),
      argv_(std::move(argv)),
      started_at_(utc_now()),
      start_(std::chrono::steady_clock::now()) {}

void RunManifest::mark(const std::string& phase) {
  timings_[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
}

void RunManifest::write(const std::filesystem::path& path) {
  for (const auto& out : outputs_) {
    if (!std::filesystem::exists(out)) throw Error(ErrorKind::io, "declared output was not written: " + out);
  }
  mark("total_seconds");
  nlohmann::json j{{"command", command_},
                   {"argv", argv_},
                   {"version", TMTSC_VERSION},
                   {"seed", seed_},
                   {"config", config_},
                   {"inputs", inputs_},
                   {"outputs", outputs_},
                   {"started_at", started_at_},
                   {"finished_at", utc_now()},
                   {"timings", timings_}};
  if (!notes_.empty()) j["notes"] = notes_;
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace tmtsc::cli
