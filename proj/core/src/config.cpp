#include "gsan/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "gsan/error.hpp"

namespace gsan {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

bool is_key_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c == '-' || c == '.';
}

template <class T>
T parse_number(const ConfigEntry& e, const char* what) {
  T value{};
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("'" + e.key + "' expects " + what + ", got '" + e.value + "'", e.line,
                      e.value_column);
  }
  return value;
}

}  // namespace

const ConfigEntry* ConfigSection::find(std::string_view key) const {
  for (const ConfigEntry& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

void ConfigSection::check_keys(const std::vector<std::string_view>& allowed) const {
  for (const ConfigEntry& e : entries) {
    if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
      const std::string where = name.empty() ? "top level" : "[" + name + "]";
      throw ConfigError("unknown key '" + e.key + "' in " + where, e.line, e.key_column);
    }
  }
}

std::optional<int> ConfigSection::get_int(std::string_view key) const {
  const ConfigEntry* e = find(key);
  if (!e) return std::nullopt;
  return parse_number<int>(*e, "an integer");
}

std::optional<double> ConfigSection::get_double(std::string_view key) const {
  const ConfigEntry* e = find(key);
  if (!e) return std::nullopt;
  return parse_number<double>(*e, "a number");
}

std::optional<std::string> ConfigSection::get_string(std::string_view key) const {
  const ConfigEntry* e = find(key);
  if (!e) return std::nullopt;
  return e->value;
}

ConfigDocument parse_config_text(std::string_view text) {
  ConfigDocument doc;
  doc.sections.push_back(ConfigSection{"", 0, {}});
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t b = 0;
    while (b < line.size() && is_space(line[b])) ++b;
    std::size_t e = line.size();
    while (e > b && is_space(line[e - 1])) --e;
    if (b == e) {
      if (end == text.size()) break;
      continue;
    }
    const int col = static_cast<int>(b) + 1;

    if (line[b] == '[') {
      if (line[e - 1] != ']') throw ConfigError("section header is missing ']'", line_no, col);
      std::string_view name = line.substr(b + 1, e - b - 2);
      while (!name.empty() && is_space(name.front())) name.remove_prefix(1);
      while (!name.empty() && is_space(name.back())) name.remove_suffix(1);
      if (name.empty() || !std::all_of(name.begin(), name.end(), is_key_char)) {
        throw ConfigError("invalid section name", line_no, col + 1);
      }
      doc.sections.push_back(ConfigSection{std::string(name), line_no, {}});
    } else {
      const std::size_t eq = line.find('=', b);
      if (eq == std::string_view::npos || eq >= e) {
        throw ConfigError("expected 'key = value'", line_no, col);
      }
      std::size_t ke = eq;
      while (ke > b && is_space(line[ke - 1])) --ke;
      if (ke == b) throw ConfigError("missing key before '='", line_no, col);
      const std::string_view key = line.substr(b, ke - b);
      for (std::size_t i = 0; i < key.size(); ++i) {
        if (!is_key_char(key[i])) {
          throw ConfigError("invalid character in key", line_no, col + static_cast<int>(i));
        }
      }
      std::size_t vb = eq + 1;
      while (vb < e && is_space(line[vb])) ++vb;
      if (vb == e) {
        throw ConfigError("missing value for '" + std::string(key) + "'", line_no,
                          static_cast<int>(eq) + 2);
      }
      ConfigSection& section = doc.sections.back();
      if (const ConfigEntry* prev = section.find(key)) {
        throw ConfigError("duplicate key '" + std::string(key) + "' (first set on line " +
                              std::to_string(prev->line) + ")",
                          line_no, col);
      }
      section.entries.push_back(ConfigEntry{std::string(key), std::string(line.substr(vb, e - vb)),
                                            line_no, col, static_cast<int>(vb) + 1});
    }
    if (end == text.size()) break;
  }
  return doc;
}

NetworkSpec parse_network_config_text(std::string_view text) {
  const ConfigDocument doc = parse_config_text(text);
  const ConfigSection& top = doc.top();
  top.check_keys({"alpha", "classes", "stem_channels", "gamma_default", "input_channels",
                  "input_size", "stem_stride", "head_channels", "intrinsic_kernel",
                  "ghost_kernel"});

  NetworkSpec spec;
  spec.alpha = top.get_double("alpha").value_or(spec.alpha);
  spec.classes = top.get_int("classes").value_or(spec.classes);
  spec.stem_channels = top.get_int("stem_channels").value_or(spec.stem_channels);
  spec.gamma_default = top.get_int("gamma_default").value_or(spec.gamma_default);
  spec.input_channels = top.get_int("input_channels").value_or(spec.input_channels);
  spec.input_size = top.get_int("input_size").value_or(spec.input_size);
  spec.stem_stride = top.get_int("stem_stride").value_or(spec.stem_stride);
  spec.head_channels = top.get_int("head_channels").value_or(spec.head_channels);
  spec.intrinsic_kernel = top.get_int("intrinsic_kernel").value_or(spec.intrinsic_kernel);
  spec.ghost_kernel = top.get_int("ghost_kernel").value_or(spec.ghost_kernel);

  for (std::size_t i = 1; i < doc.sections.size(); ++i) {
    const ConfigSection& s = doc.sections[i];
    if (s.name != "stage") {
      throw ConfigError("unknown section [" + s.name + "]", s.line, 1);
    }
    s.check_keys({"in", "exp", "out", "stride", "gamma"});
    StageSpec stage;
    for (const char* required : {"in", "exp", "out"}) {
      if (!s.find(required)) {
        throw ConfigError("[stage] is missing '" + std::string(required) + "'", s.line, 1);
      }
    }
    stage.in = *s.get_int("in");
    stage.expansion = *s.get_int("exp");
    stage.out = *s.get_int("out");
    stage.stride = s.get_int("stride").value_or(1);
    stage.gamma = s.get_int("gamma").value_or(0);
    spec.stages.push_back(stage);
  }

  spec.validate();
  return spec;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError(path, "read failed");
  return buf.str();
}

NetworkSpec parse_network_config(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_network_config_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string emit_network_config(const NetworkSpec& spec) {
  char alpha[64];
  const auto res = std::to_chars(alpha, alpha + sizeof alpha, spec.alpha);
  std::ostringstream out;
  out << "alpha = " << std::string_view(alpha, static_cast<std::size_t>(res.ptr - alpha)) << '\n'
      << "classes = " << spec.classes << '\n'
      << "input_channels = " << spec.input_channels << '\n'
      << "input_size = " << spec.input_size << '\n'
      << "stem_channels = " << spec.stem_channels << '\n'
      << "stem_stride = " << spec.stem_stride << '\n'
      << "head_channels = " << spec.head_channels << '\n'
      << "gamma_default = " << spec.gamma_default << '\n'
      << "intrinsic_kernel = " << spec.intrinsic_kernel << '\n'
      << "ghost_kernel = " << spec.ghost_kernel << '\n';
  for (const StageSpec& s : spec.stages) {
    out << "\n[stage]\n"
        << "in = " << s.in << '\n'
        << "exp = " << s.expansion << '\n'
        << "out = " << s.out << '\n'
        << "stride = " << s.stride << '\n';
    if (s.gamma != 0) out << "gamma = " << s.gamma << '\n';
  }
  return out.str();
}

}  // namespace gsan
