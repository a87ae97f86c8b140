#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hilo/orchestrator.hpp"

namespace hilo::gateway {

using nlohmann::json;

// Server frames are JSON objects with a "type" field:
//   state_update{scene, robot, time}  command_issued{id, skill_text}  utterance{text}
//   skill_done{id, skill_text}  metrics{ia, tp}  error{code, detail}
// Client frames:
//   start_session{task, policy, seed}  prompt{text}  interjection{text}  resume
//   eval_mark{decision_id, correct}  pause  stop

class ProtocolError : public std::runtime_error {
public:
    ProtocolError(std::string code, const std::string& detail) : std::runtime_error(detail), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct StartSession {
    Task task = Task::table_bussing;
    orch::Policy policy = orch::Policy::hierarchical_reference;
    std::uint64_t seed = 0;
};
struct Say {
    UserEvent::Kind kind = UserEvent::Kind::prompt;  // prompt, interjection or resume
    std::string text;
};
struct EvalMark {
    std::int64_t decision_id = 0;
    bool correct = false;
};
struct Pause {};
struct Stop {};

using ClientMessage = std::variant<StartSession, Say, EvalMark, Pause, Stop>;

/// Throws ProtocolError with code "malformed" or "unknown_type".
ClientMessage parse_client_message(std::string_view text);

json error_frame(const std::string& code, const std::string& detail);

/// Empty when `frame` follows the server schema.
std::vector<std::string> validate_server_frame(const json& frame);

/// Maps log records to server frames. Keeps the last robot state so the
/// closing state_update carries one.
class FrameMapper {
public:
    std::vector<json> map(const orch::LogRecord& record);

private:
    json robot_;
};

/// Every frame a log produces, in order.
std::vector<json> frames_from_log(const orch::EventLog& log);

struct ReplayOptions {
    bool paced = false;  // sleep between frames by recorded time
    double speed = 1.0;
};

/// Re-emits a log's frames, one dumped JSON text per call. Throws
/// orch::LogError naming the first bad line before anything is emitted.
void replay(std::istream& in, const std::function<void(const std::string&)>& emit, const ReplayOptions& options = {});
void replay(const std::filesystem::path& log_path, const std::function<void(const std::string&)>& emit,
            const ReplayOptions& options = {});

struct HostConfig {
    orch::SessionConfig base;  // task, policy and seed come from start_session
    std::optional<std::filesystem::path> log_dir;
};

/// One connection's session, independent of transport. The caller feeds
/// client texts and the virtual time it has reached; frames go to `emit`.
class SessionHost {
public:
    SessionHost(HostConfig config, std::function<void(const std::string&)> emit);
    ~SessionHost();

    void handle(std::string_view text);
    /// Advances an active, unpaused session to `now`, relative to its start.
    void tick(Micros now);

    bool active() const;
    bool paused() const;
    const orch::Session* session() const;
    int sessions_started() const { return sessions_started_; }
    std::optional<std::filesystem::path> last_log() const;

    /// IA over marked decisions (null with no marks) and TP against the
    /// session's current goal (null when the goal selects nothing).
    json metrics() const;

private:
    void finish();
    void send(const json& frame);

    HostConfig config_;
    std::function<void(const std::string&)> emit_;
    std::unique_ptr<orch::Session> session_;
    FrameMapper mapper_;
    std::map<std::int64_t, bool> marks_;
    std::map<std::int64_t, std::string> issued_;
    bool paused_ = false;
    bool finished_ = false;
    int sessions_started_ = 0;
    std::optional<std::filesystem::path> last_log_;
};

struct ServeOptions {
    std::string address = "0.0.0.0";
    unsigned short port = 8080;
    HostConfig host;
    double speed = 1.0;  // virtual seconds per wall second
    int tick_ms = 5;
};

/// WebSocket server, one SessionHost per connection, realtime pacing.
/// Blocks until stop() from another thread.
class Server {
public:
    explicit Server(ServeOptions options);
    ~Server();
    /// Binds and returns the bound port (useful with port 0).
    unsigned short bind();
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace hilo::gateway
