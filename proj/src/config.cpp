#include "tmtsc/config.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/io.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>

namespace tmtsc {

using nlohmann::json;

namespace {

class TomlLine {
 public:
  TomlLine(std::string_view text, std::string_view source, std::size_t line)
      : s_(text), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse, fmt::format("{}:{}: {}", source_, line_, what));
  }

  void skip_space() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }
  bool at_end_or_comment() {
    skip_space();
    return i_ >= s_.size() || s_[i_] == '#';
  }
  bool eat(char c) {
    skip_space();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(fmt::format("expected '{}'", c));
  }

  std::string key() {
    skip_space();
    if (i_ < s_.size() && s_[i_] == '"') return basic_string();
    const std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-')) ++i_;
    if (start == i_) fail("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    while (eat('.')) parts.push_back(key());
    return parts;
  }

  json value() {
    skip_space();
    if (i_ >= s_.size()) fail("missing value");
    const char c = s_[i_];
    if (c == '"') return basic_string();
    if (c == '[') {
      ++i_;
      json arr = json::array();
      if (eat(']')) return arr;
      do {
        if (eat(']')) return arr;  // trailing comma
        arr.push_back(value());
      } while (eat(','));
      expect(']');
      return arr;
    }
    const std::size_t start = i_;
    while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' && s_[i_] != '\t') ++i_;
    std::string word(s_.substr(start, i_ - start));
    if (word == "true") return true;
    if (word == "false") return false;
    if (word == "inf" || word == "+inf" || word == "-inf" || word == "nan") fail("non-finite numbers are not accepted");
    std::erase(word, '_');
    const bool is_float = word.find_first_of(".eE") != std::string::npos;
    const char* first = word.data() + (word.starts_with('+') ? 1 : 0);
    const char* last = word.data() + word.size();
    if (is_float) {
      double d = 0.0;
      const auto [p, ec] = std::from_chars(first, last, d);
      if (ec != std::errc() || p != last) fail(fmt::format("bad value '{}'", word));
      return d;
    }
    std::int64_t n = 0;
    const auto [p, ec] = std::from_chars(first, last, n);
    if (ec != std::errc() || p != last) fail(fmt::format("bad value '{}'", word));
    return n;
  }

 private:
  std::string basic_string() {
    ++i_;  // opening quote
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      char c = s_[i_++];
      if (c == '\\') {
        if (i_ >= s_.size()) break;
        switch (s_[i_++]) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail("unsupported escape");
        }
      }
      out.push_back(c);
    }
    if (i_ >= s_.size()) fail("unterminated string");
    ++i_;
    return out;
  }

  std::string_view s_;
  std::string_view source_;
  std::size_t line_;
  std::size_t i_ = 0;
};

json& descend(json& root, const std::vector<std::string>& path, const TomlLine& at) {
  json* node = &root;
  for (const auto& part : path) {
    json& child = (*node)[part];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) at.fail(fmt::format("'{}' is already a value", part));
    node = &child;
  }
  return *node;
}

}  // namespace

json parse_toml(std::string_view text, std::string_view source) {
  json root = json::object();
  json* table = &root;
  std::size_t line_number = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_number;
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    TomlLine line(raw, source, line_number);
    if (line.at_end_or_comment()) continue;
    if (line.eat('[')) {
      const auto path = line.dotted_key();
      line.expect(']');
      if (!line.at_end_or_comment()) line.fail("trailing characters after table header");
      table = &descend(root, path, line);
      continue;
    }
    auto path = line.dotted_key();
    line.expect('=');
    json v = line.value();
    if (!line.at_end_or_comment()) line.fail("trailing characters after value");
    const std::string leaf = path.back();
    path.pop_back();
    json& target = descend(*table, path, line);
    if (target.contains(leaf)) line.fail(fmt::format("duplicate key '{}'", leaf));
    target[leaf] = std::move(v);
  }
  return root;
}

json load_config_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (path.extension() == ".toml") return parse_toml(text, path.string());
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, fmt::format("{}: {}", path.string(), e.what()));
  }
}

json to_json(const SynthConfig& c) {
  return json{{"n_companies", c.n_companies},
              {"seed", c.seed},
              {"class_balance_vc", c.class_balance_vc},
              {"class_balance_gc", c.class_balance_gc},
              {"signal_strength", c.signal_strength},
              {"missing_rate", c.missing_rate},
              {"min_months", c.min_months},
              {"max_months", c.max_months},
              {"n_round_types", c.n_round_types},
              {"companies_per_group", c.companies_per_group},
              {"label_scale", c.label_scale}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, "synthetic configuration must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_companies") c.n_companies = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "class_balance_vc") c.class_balance_vc = value.get<double>();
      else if (key == "class_balance_gc") c.class_balance_gc = value.get<double>();
      else if (key == "signal_strength") c.signal_strength = value.get<double>();
      else if (key == "missing_rate") c.missing_rate = value.get<double>();
      else if (key == "min_months") c.min_months = value.get<int>();
      else if (key == "max_months") c.max_months = value.get<int>();
      else if (key == "n_round_types") c.n_round_types = value.get<int>();
      else if (key == "companies_per_group") c.companies_per_group = value.get<double>();
      else if (key == "label_scale") c.label_scale = value.get<double>();
      else throw Error(ErrorKind::configuration, fmt::format("unknown synthetic option '{}'", key));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, fmt::format("bad synthetic option: {}", e.what()));
  }
  c.validate();
  return c;
}

}  // namespace tmtsc
