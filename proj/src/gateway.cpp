#include "hilo/gateway.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "hilo/eval.hpp"
#include "hilo/json_io.hpp"

namespace hilo::gateway {

namespace {

const json& field(const json& j, const char* key) {
    if (!j.contains(key)) throw ProtocolError("malformed", std::string("missing field ") + key);
    return j.at(key);
}

std::string text_field(const json& j) {
    const auto& t = field(j, "text");
    if (!t.is_string() || t.get<std::string>().empty()) throw ProtocolError("malformed", "text must be a non-empty string");
    return t.get<std::string>();
}

template <class E>
E enum_field(const json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) throw ProtocolError("malformed", std::string(key) + " must be a string");
    try {
        return parse_enum<E>(v.get<std::string>());
    } catch (const std::exception&) {
        throw ProtocolError("malformed", "unknown " + std::string(key) + " '" + v.get<std::string>() + "'");
    }
}

bool keys_are(const json& j, std::initializer_list<const char*> keys) {
    if (j.size() != keys.size()) return false;
    for (const char* k : keys) {
        if (!j.contains(k)) return false;
    }
    return true;
}

}  // namespace

ClientMessage parse_client_message(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error&) {
        throw ProtocolError("malformed", "message is not JSON");
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
        throw ProtocolError("malformed", "message needs a string type");
    }
    const auto type = j["type"].get<std::string>();
    if (type == "start_session") {
        StartSession s;
        s.task = enum_field<Task>(j, "task");
        s.policy = enum_field<orch::Policy>(j, "policy");
        const auto& seed = field(j, "seed");
        if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
            throw ProtocolError("malformed", "seed must be a non-negative integer");
        }
        s.seed = seed.get<std::uint64_t>();
        return s;
    }
    if (type == "prompt") return Say{UserEvent::Kind::prompt, text_field(j)};
    if (type == "interjection") return Say{UserEvent::Kind::interjection, text_field(j)};
    if (type == "resume") return Say{UserEvent::Kind::resume, {}};
    if (type == "eval_mark") {
        const auto& id = field(j, "decision_id");
        const auto& ok = field(j, "correct");
        if (!id.is_number_integer()) throw ProtocolError("malformed", "decision_id must be an integer");
        if (!ok.is_boolean()) throw ProtocolError("malformed", "correct must be a boolean");
        return EvalMark{id.get<std::int64_t>(), ok.get<bool>()};
    }
    if (type == "pause") return Pause{};
    if (type == "stop") return Stop{};
    throw ProtocolError("unknown_type", "unknown message type '" + type + "'");
}

json error_frame(const std::string& code, const std::string& detail) {
    return json{{"type", "error"}, {"code", code}, {"detail", detail}};
}

std::vector<std::string> validate_server_frame(const json& f) {
    if (!f.is_object() || !f.contains("type") || !f["type"].is_string()) return {"frame needs a string type"};
    const auto type = f["type"].get<std::string>();
    auto num_or_null = [](const json& v) { return v.is_null() || v.is_number(); };
    bool ok = false;
    if (type == "state_update") {
        ok = keys_are(f, {"type", "scene", "robot", "time"}) && f["scene"].is_object() && f["robot"].is_object() &&
             f["time"].is_number();
    } else if (type == "command_issued" || type == "skill_done") {
        ok = keys_are(f, {"type", "id", "skill_text"}) && f["id"].is_number_integer() && f["skill_text"].is_string();
    } else if (type == "utterance") {
        ok = keys_are(f, {"type", "text"}) && f["text"].is_string();
    } else if (type == "metrics") {
        ok = keys_are(f, {"type", "ia", "tp"}) && num_or_null(f["ia"]) && num_or_null(f["tp"]);
    } else if (type == "error") {
        ok = keys_are(f, {"type", "code", "detail"}) && f["code"].is_string() && f["detail"].is_string();
    } else {
        return {"unknown frame type '" + type + "'"};
    }
    if (!ok) return {type + " frame has missing, extra or mistyped fields"};
    return {};
}

// =========================================================================================
// Log to frames
// =========================================================================================

std::vector<json> FrameMapper::map(const orch::LogRecord& r) {
    const auto& p = r.payload;
    auto state = [&](const json& scene) {
        return json{{"type", "state_update"}, {"scene", scene}, {"robot", robot_}, {"time", time_json(r.t)}};
    };
    if (r.kind == "session_start") {
        robot_ = p.at("robot");
        return {state(p.at("scene"))};
    }
    if (r.kind == "command_issued") {
        return {json{{"type", "command_issued"}, {"id", p.at("id")}, {"skill_text", p.at("skill_text")}}};
    }
    if (r.kind == "utterance") return {json{{"type", "utterance"}, {"text", p.at("text")}}};
    if (r.kind == "skill_done") {
        robot_ = p.at("robot");
        return {json{{"type", "skill_done"}, {"id", p.at("command_id")}, {"skill_text", p.at("skill_text")}},
                state(p.at("scene"))};
    }
    if (r.kind == "trial_end") return {state(p.at("scene"))};
    return {};
}

std::vector<json> frames_from_log(const orch::EventLog& log) {
    FrameMapper mapper;
    std::vector<json> out;
    for (const auto& r : log.records()) {
        for (auto& f : mapper.map(r)) out.push_back(std::move(f));
    }
    return out;
}

void replay(std::istream& in, const std::function<void(const std::string&)>& emit, const ReplayOptions& options) {
    const auto log = orch::EventLog::parse(in);
    FrameMapper mapper;
    std::optional<Micros> prev;
    for (const auto& r : log.records()) {
        auto frames = mapper.map(r);
        if (frames.empty()) continue;
        if (options.paced && prev && r.t > *prev) {
            std::this_thread::sleep_for(
                std::chrono::duration<double>(to_seconds(r.t - *prev) / std::max(options.speed, 1e-6)));
        }
        prev = r.t;
        for (const auto& f : frames) emit(f.dump());
    }
}

void replay(const std::filesystem::path& log_path, const std::function<void(const std::string&)>& emit,
            const ReplayOptions& options) {
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("cannot open " + log_path.string());
    replay(in, emit, options);
}

// =========================================================================================
// Session host
// =========================================================================================

SessionHost::SessionHost(HostConfig config, std::function<void(const std::string&)> emit)
    : config_(std::move(config)), emit_(std::move(emit)) {}

SessionHost::~SessionHost() {
    try {
        finish();
    } catch (...) {
    }
}

bool SessionHost::active() const { return session_ && !finished_; }
bool SessionHost::paused() const { return paused_; }
const orch::Session* SessionHost::session() const { return session_.get(); }
std::optional<std::filesystem::path> SessionHost::last_log() const { return last_log_; }

void SessionHost::send(const json& frame) { emit_(frame.dump()); }

json SessionHost::metrics() const {
    json m = {{"type", "metrics"}, {"ia", nullptr}, {"tp", nullptr}};
    if (!marks_.empty()) {
        std::int64_t ok = 0;
        for (const auto& [id, c] : marks_) ok += c ? 1 : 0;
        m["ia"] = eval::Ratio{ok, static_cast<std::int64_t>(marks_.size())}.value();
    }
    if (session_) {
        try {
            m["tp"] = eval::task_progress(session_->scene(), session_->truth()).value();
        } catch (const eval::EmptyGoal&) {
        }
    }
    return m;
}

void SessionHost::finish() {
    if (!session_ || finished_) return;
    finished_ = true;
    send(metrics());
    if (config_.log_dir) {
        std::filesystem::create_directories(*config_.log_dir);
        const auto& c = session_->config();
        auto path = *config_.log_dir / ("session_" + std::to_string(sessions_started_) + "_" +
                                        std::string(to_string(c.task)) + "_" + std::to_string(c.seed) + ".jsonl");
        session_->log().write(path);
        last_log_ = path;
    }
}

void SessionHost::handle(std::string_view text) {
    ClientMessage msg;
    try {
        msg = parse_client_message(text);
    } catch (const ProtocolError& e) {
        send(error_frame(e.code(), e.what()));
        return;
    }

    if (const auto* s = std::get_if<StartSession>(&msg)) {
        finish();
        auto cfg = config_.base;
        cfg.task = s->task;
        cfg.policy = s->policy;
        cfg.seed = s->seed;
        cfg.realtime = true;
        std::unique_ptr<orch::Session> next;
        try {
            next = std::make_unique<orch::Session>(cfg);
        } catch (const std::exception& e) {
            send(error_frame("bad_session", e.what()));
            return;
        }
        session_ = std::move(next);
        ++sessions_started_;
        finished_ = false;
        paused_ = false;
        marks_.clear();
        issued_.clear();
        mapper_ = FrameMapper{};
        auto forward = [this](const orch::LogRecord& r) {
            if (r.kind == "command_issued") issued_[r.payload.at("id").get<std::int64_t>()] = r.payload.at("skill_text");
            for (const auto& f : mapper_.map(r)) send(f);
        };
        for (const auto& r : session_->log().records()) forward(r);
        session_->on_record(forward);
        return;
    }

    if (!active()) {
        send(error_frame("no_session", "no active session; send start_session first"));
        return;
    }

    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, Say>) {
                session_->inject(UserEvent{m.kind, m.text, session_->now()});
            } else if constexpr (std::is_same_v<M, EvalMark>) {
                if (!issued_.count(m.decision_id)) {
                    send(error_frame("unknown_decision", "no command with id " + std::to_string(m.decision_id)));
                    return;
                }
                marks_[m.decision_id] = m.correct;
                send(metrics());
            } else if constexpr (std::is_same_v<M, Pause>) {
                paused_ = !paused_;
            } else if constexpr (std::is_same_v<M, Stop>) {
                finish();
            }
        },
        msg);
}

void SessionHost::tick(Micros now) {
    if (!active() || paused_) return;
    session_->advance_to(now);
    if (session_->ended()) finish();
}

// =========================================================================================
// WebSocket server
// =========================================================================================

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace ws = beast::websocket;
using tcp = asio::ip::tcp;
using WallClock = std::chrono::steady_clock;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, const ServeOptions& options)
        : ws_(std::move(socket)),
          timer_(ws_.get_executor()),
          options_(options),
          host_(options.host, [this](const std::string& s) { enqueue(s); }) {}

    ~Connection() { closed_ = true; }

    void start() {
        ws_.text(true);
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->read();
            self->last_wall_ = WallClock::now();
            self->schedule_tick();
        });
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->closed_ = true;
                self->timer_.cancel();
                return;
            }
            const auto text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->host_.handle(text);
            self->read();
        });
    }

    void schedule_tick() {
        timer_.expires_after(std::chrono::milliseconds(options_.tick_ms));
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->closed_) return;
            self->tick();
            self->schedule_tick();
        });
    }

    void tick() {
        const auto wall = WallClock::now();
        if (host_.sessions_started() != session_seen_) {
            session_seen_ = host_.sessions_started();
            virtual_now_ = Micros{0};
        } else if (host_.active() && !host_.paused()) {
            const auto dt = std::chrono::duration<double>(wall - last_wall_).count() * options_.speed;
            virtual_now_ += seconds(dt);
        }
        last_wall_ = wall;
        host_.tick(virtual_now_);
    }

    void enqueue(const std::string& frame) {
        if (closed_) return;
        outbox_.push_back(frame);
        if (!writing_) write();
    }

    void write() {
        if (outbox_.empty() || closed_) {
            writing_ = false;
            return;
        }
        writing_ = true;
        ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->closed_ = true;
                self->writing_ = false;
                return;
            }
            self->outbox_.pop_front();
            self->write();
        });
    }

    ws::stream<tcp::socket> ws_;
    asio::steady_timer timer_;
    const ServeOptions& options_;
    beast::flat_buffer buffer_;
    std::deque<std::string> outbox_;
    bool writing_ = false;
    bool closed_ = false;
    SessionHost host_;
    int session_seen_ = 0;
    Micros virtual_now_{0};
    WallClock::time_point last_wall_;
};

}  // namespace

struct Server::Impl {
    ServeOptions options;
    asio::io_context ioc{1};
    tcp::acceptor acceptor{ioc};

    void accept() {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), options)->start();
            accept();
        });
    }
};

Server::Server(ServeOptions options) : impl_(std::make_unique<Impl>()) { impl_->options = std::move(options); }

Server::~Server() = default;

unsigned short Server::bind() {
    auto& a = impl_->acceptor;
    if (a.is_open()) return a.local_endpoint().port();
    const tcp::endpoint ep(asio::ip::make_address(impl_->options.address), impl_->options.port);
    a.open(ep.protocol());
    a.set_option(asio::socket_base::reuse_address(true));
    a.bind(ep);
    a.listen();
    return a.local_endpoint().port();
}

void Server::run() {
    bind();
    impl_->accept();
    impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace hilo::gateway
