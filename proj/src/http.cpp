#include "ragalign/http.hpp"

#include "httplib.h"

#include "ragalign/errors.hpp"

namespace ragalign::http {

Url parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ArgumentError("not an absolute URL: " + url);
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ArgumentError("unsupported URL scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return Url{url, "/"};
    return Url{url.substr(0, path_start), url.substr(path_start)};
}

Response post_json(const std::string& url, const std::string& body, const std::string& bearer_token,
                   int timeout_seconds) {
    const auto parts = parse_url(url);
    httplib::Client client(parts.scheme_host_port);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    auto result = client.Post(parts.path, headers, body, "application/json");
    if (!result) return Response{0, {}, httplib::to_string(result.error())};
    return Response{result->status, result->body, {}};
}

}  // namespace ragalign::http
