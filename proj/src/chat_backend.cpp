#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "mpcattack/evaluation.hpp"
#include "mpcattack/image_io.hpp"

namespace mpcattack {

using json = nlohmann::json;

std::string chat_completion(const ChatBackendConfig& backend, const std::string& prompt,
                            std::span<const std::uint8_t> image_png) {
  const char* key = std::getenv(backend.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw BackendError("environment variable " + backend.api_key_env + " is not set");
  }

  json content = json::array({{{"type", "text"}, {"text", prompt}}});
  if (!image_png.empty()) {
    const std::string raw(image_png.begin(), image_png.end());
    content.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:image/png;base64," +
                                                  httplib::detail::base64_encode(raw)}}}});
  }
  const json body = {{"model", backend.model},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", content}}})}};

  httplib::Client client(backend.endpoint);
  client.set_connection_timeout(backend.timeout_seconds, 0);
  client.set_read_timeout(backend.timeout_seconds, 0);
  client.set_bearer_token_auth(key);
  const auto res = client.Post(backend.path, body.dump(), "application/json");
  if (!res) {
    throw BackendError("request to " + backend.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendError("backend returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 500));
  }
  try {
    const json reply = json::parse(res->body);
    std::string text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (text.empty()) throw BackendError("backend returned an empty message");
    return text;
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed backend reply: ") + e.what());
  }
}

std::string ChatVictim::describe(const ImageTensor& img) const {
  return chat_completion(backend_, prompt_, encode_png(img));
}

}  // namespace mpcattack
