#include "http_util.hpp"

#include "nepner/error.hpp"

namespace nepner::detail {

ParsedUrl parse_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw config_error("URL without scheme: '" + url + "'");
  auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw config_error("unsupported URL scheme '" + scheme + "'");
  }
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = url;
    out.path = "/";
  } else {
    out.scheme_host_port = url.substr(0, path_start);
    out.path = url.substr(path_start);
  }
  if (out.scheme_host_port.size() <= scheme_end + 3) throw config_error("URL without host: '" + url + "'");
  return out;
}

}  // namespace nepner::detail
