#pragma once

// Line-based `key = value` configuration text with `[section]` headers and
// `#` comments. Sections may repeat (one `[stage]` per stage); keys may not
// repeat inside one section.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gsan/network.hpp"

namespace gsan {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
  int key_column = 0;
  int value_column = 0;
};

struct ConfigSection {
  std::string name;  // empty for the leading top-level block
  int line = 0;
  std::vector<ConfigEntry> entries;

  const ConfigEntry* find(std::string_view key) const;
  // Throws ConfigError at the first key not in `allowed`.
  void check_keys(const std::vector<std::string_view>& allowed) const;

  std::optional<int> get_int(std::string_view key) const;
  std::optional<double> get_double(std::string_view key) const;
  std::optional<std::string> get_string(std::string_view key) const;
};

struct ConfigDocument {
  std::vector<ConfigSection> sections;  // sections[0] is the top level

  const ConfigSection& top() const { return sections.front(); }
};

// Throws ConfigError with line and column on malformed text.
ConfigDocument parse_config_text(std::string_view text);

// Network description. Top-level keys: alpha, classes, stem_channels,
// gamma_default, input_channels, input_size, stem_stride, head_channels,
// intrinsic_kernel, ghost_kernel. Stage keys: in, exp, out, stride, gamma.
NetworkSpec parse_network_config_text(std::string_view text);
NetworkSpec parse_network_config(const std::string& path);
std::string emit_network_config(const NetworkSpec& spec);

// Whole-file read; throws IoError.
std::string read_text_file(const std::string& path);

}  // namespace gsan
