#pragma once

#include <string>

namespace ragalign::http {

struct Url {
    std::string scheme_host_port;  // e.g. "http://localhost:8080"
    std::string path;              // e.g. "/v1/chat/completions"
};

/// Splits an absolute http(s) URL. Throws ArgumentError on anything else.
Url parse_url(const std::string& url);

struct Response {
    int status = 0;  // 0 when the transport failed
    std::string body;
    std::string transport_error;
};

/// POST a JSON body; never throws on network failure.
Response post_json(const std::string& url, const std::string& body, const std::string& bearer_token,
                   int timeout_seconds);

}  // namespace ragalign::http
