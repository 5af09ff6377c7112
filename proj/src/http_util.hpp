#pragma once

#include <string>

namespace nepner::detail {

struct ParsedUrl {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;              // "/v1/chat/completions"
};

// Throws Error(kConfig) on anything that is not http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

}  // namespace nepner::detail
