#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ptnet::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Entries = std::vector<std::pair<std::string, std::string>>;

// `key = value` lines; '#' starts a comment, blank lines are ignored. Throws
// ConfigError naming the line for anything else or a repeated key.
Entries parse(const std::string& text);
Entries parse_file(const std::string& path);

bool to_bool(const std::string& key, const std::string& v);
long long to_int(const std::string& key, const std::string& v);
std::uint64_t to_u64(const std::string& key, const std::string& v);
double to_double(const std::string& key, const std::string& v);

}  // namespace ptnet::config
