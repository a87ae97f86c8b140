#include "hilo/remote.hpp"

#include <httplib.h>

#include "hilo/json_io.hpp"

namespace hilo::highlevel {

std::string_view BackendError::code() const {
    switch (kind_) {
        case Kind::timeout:
            return "backend_timeout";
        case Kind::malformed:
            return "backend_malformed";
        case Kind::transport:
            return "backend_unreachable";
    }
    return "backend_error";
}

json to_wire(const RemoteRequest& r) {
    json j = {{"task", r.task},
              {"views", r.views},
              {"active_prompt", r.active_prompt},
              {"interjections", r.interjections},
              {"prior_skills", r.prior_skills},
              {"allowed_skills", r.allowed_skills}};
    if (r.scenario) j["scenario"] = *r.scenario;
    return j;
}

HighLevelDecision parse_reply(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendError(BackendError::Kind::malformed, std::string("reply is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("skill_text") || !j["skill_text"].is_string()) {
        throw BackendError(BackendError::Kind::malformed, "reply lacks a skill_text string");
    }
    HighLevelDecision d;
    d.skill_text = j["skill_text"].get<std::string>();
    if (j.contains("utterance") && !j["utterance"].is_null()) {
        if (!j["utterance"].is_string()) throw BackendError(BackendError::Kind::malformed, "utterance is not a string");
        d.utterance = j["utterance"].get<std::string>();
    }
    return d;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    const auto& url = config_.url;
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("backend url needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    origin_ = url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

json RemoteBackend::post(const json& body) const {
    httplib::Client client(origin_);
    const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
            throw BackendError(BackendError::Kind::timeout, "backend timed out: " + httplib::to_string(err));
        }
        throw BackendError(BackendError::Kind::transport, "backend unreachable: " + httplib::to_string(err));
    }
    if (res->status != 200) {
        throw BackendError(BackendError::Kind::transport, "backend returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw BackendError(BackendError::Kind::malformed, std::string("reply is not JSON: ") + e.what());
    }
}

HighLevelDecision RemoteBackend::decide(const RemoteRequest& request) const {
    return parse_reply(post(to_wire(request)).dump());
}

}  // namespace hilo::highlevel
