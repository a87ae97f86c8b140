#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/domain.hpp"

namespace hilo::highlevel {

struct RemoteConfig {
    std::string url;  // http://host:port/path
    int timeout_ms = 2000;
};

/// Wire request for a model endpoint standing in for the high-level policy
/// (or, with `scenario` set, for the interaction generator).
struct RemoteRequest {
    Task task = Task::table_bussing;
    SceneState views;
    std::string active_prompt;
    std::vector<std::string> interjections;
    std::vector<std::string> prior_skills;
    std::vector<std::string> allowed_skills;
    std::optional<ScenarioType> scenario;
};

nlohmann::json to_wire(const RemoteRequest& request);

class BackendError : public std::runtime_error {
public:
    enum class Kind { timeout, malformed, transport };
    BackendError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }
    std::string_view code() const;

private:
    Kind kind_;
};

/// Reads {skill_text, utterance?}. Throws BackendError(malformed).
HighLevelDecision parse_reply(const std::string& body);

class RemoteBackend {
public:
    explicit RemoteBackend(RemoteConfig config);

    /// Blocking POST. Throws BackendError on timeout, transport failure or a
    /// reply that does not follow the schema.
    HighLevelDecision decide(const RemoteRequest& request) const;

    /// Raw round trip; the reply body parsed as JSON.
    nlohmann::json post(const nlohmann::json& body) const;

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::string origin_;
    std::string path_;
};

}  // namespace hilo::highlevel
