#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "epinet/config.hpp"
#include "epinet/environment.hpp"
#include "epinet/logging.hpp"
#include "epinet/ppo.hpp"
#include "epinet/rng.hpp"

namespace epinet {

/// Request-level failure carrying the HTTP status to report.
class ServiceError : public std::runtime_error
{
  public:
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const noexcept { return status_; }

  private:
    int status_;
};

enum class SessionStatus : std::uint8_t { AwaitingDecision, Finished, Aborted };

inline std::string to_string(SessionStatus s)
{
    switch (s) {
    case SessionStatus::AwaitingDecision: return "AwaitingDecision";
    case SessionStatus::Finished: return "Finished";
    case SessionStatus::Aborted: return "Aborted";
    }
    return "?";
}

inline nlohmann::json observation_to_json(const Observation& o)
{
    return {{"detected_symptomatic", o[0]},
            {"detected_asymptomatic", o[1]},
            {"prevalence", o[2]},
            {"recoveries", o[3]},
            {"fatalities", o[4]},
            {"vector", o}};
}

struct LoadedPolicy {
    std::string id;
    std::shared_ptr<const PolicyParams> params;
    double lambda = 0.0;
};

/// One steerable episode. All access goes through `mutex`.
struct Session {
    std::string id;
    std::uint64_t seed = 0;
    EnvConfig config;
    std::unique_ptr<EpidemicEnv> env;
    SessionStatus status = SessionStatus::AwaitingDecision;
    std::string abort_reason;
    std::optional<LoadedPolicy> policy;
    double cum_cost = 0.0;
    double cum_effect = 0.0;
    std::string trace_path;
    std::mutex mutex;
};

struct ServiceOptions {
    ScenarioConfig base = optimisation_preset();
    std::string checkpoint_dir;
    /// Directory for per-session JSONL traces; empty disables them.
    std::string trace_dir;
    std::uint64_t seed = 1;
};

class SessionManager
{
  public:
    SessionManager(std::shared_ptr<const Population> pop, ServiceOptions opts)
        : pop_(std::move(pop)), opts_(std::move(opts)), id_rng_(derive_seed(opts_.seed, {0x1Dull}))
    {
        if (!pop_) {
            throw std::invalid_argument("service: population required");
        }
        if (!opts_.checkpoint_dir.empty()) {
            load_checkpoints(opts_.checkpoint_dir);
        }
    }

    const std::vector<LoadedPolicy>& policies() const noexcept { return policies_; }

    /// POST /sessions. Body: {"config": {...}, "seed": n, "policy_id": "..."}.
    nlohmann::json create(const nlohmann::json& body)
    {
        if (!body.is_object()) {
            throw ServiceError(422, "request body must be a JSON object");
        }
        for (const auto& [k, v] : body.items()) {
            if (k != "config" && k != "seed" && k != "policy_id") {
                throw ServiceError(422, "unknown key '" + k + "'");
            }
        }
        ScenarioConfig sc = opts_.base;
        if (body.contains("config")) {
            const auto& doc = body.at("config");
            if (!doc.is_object()) {
                throw ServiceError(422, "config must be an object");
            }
            if (doc.contains("population")) {
                throw ServiceError(422, "config.population is fixed by the service");
            }
            // A document naming a mode starts from that preset; otherwise it
            // overlays the service's base scenario.
            nlohmann::json merged = doc;
            if (!doc.contains("mode")) {
                merged = scenario_config_to_json(opts_.base);
                merged.erase("population");
                merged.merge_patch(doc);
            }
            try {
                sc = scenario_config_from_json(merged);
            } catch (const ConfigError& e) {
                throw ServiceError(422, e.what());
            }
        }
        auto s = std::make_shared<Session>();
        {
            std::lock_guard lock(id_mutex_);
            s->id = make_id();
            s->seed = id_rng_();
        }
        if (body.contains("seed")) {
            if (!body.at("seed").is_number_unsigned()) {
                throw ServiceError(422, "seed must be a non-negative integer");
            }
            s->seed = body.at("seed").get<std::uint64_t>();
        }
        s->config = sc.env;
        if (body.contains("policy_id")) {
            if (!body.at("policy_id").is_string()) {
                throw ServiceError(422, "policy_id must be a string");
            }
            s->policy = find_policy(body.at("policy_id").get<std::string>(), sc.env.sd_max);
        } else {
            s->policy = match_policy(sc.env.sd_max, sc.env.econ.lambda);
        }
        try {
            s->env = std::make_unique<EpidemicEnv>(pop_, sc.env, baseline_for(sc));
        } catch (const std::invalid_argument& e) {
            throw ServiceError(422, e.what());
        }
        try {
            s->env->reset(s->seed);
        } catch (const std::runtime_error& e) {
            s->status = SessionStatus::Aborted;
            s->abort_reason = e.what();
            logger()->warn("session {} aborted: {}", s->id, e.what());
        }
        if (!opts_.trace_dir.empty()) {
            s->trace_path = (std::filesystem::path(opts_.trace_dir) / ("session-" + s->id + ".jsonl")).string();
        }
        nlohmann::json state;
        {
            std::lock_guard lock(s->mutex);
            state = state_json(*s);
        }
        std::unique_lock lock(map_mutex_);
        sessions_[s->id] = s;
        return state;
    }

    nlohmann::json get(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        return state_json(*s);
    }

    /// POST /sessions/{id}/step. Body: {"sd_level": x}.
    nlohmann::json step(const std::string& id, const nlohmann::json& body)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (s->status != SessionStatus::AwaitingDecision) {
            throw ServiceError(409, "session is " + to_string(s->status));
        }
        if (!body.is_object() || !body.contains("sd_level") || !body.at("sd_level").is_number()) {
            throw ServiceError(422, "sd_level (number) required");
        }
        const double level = body.at("sd_level").get<double>();
        if (!(level >= 0.0 && level <= s->config.sd_max)) {
            throw ServiceError(422, "sd_level must lie in [0, " + std::to_string(s->config.sd_max) + "]");
        }
        const StepResult r = s->env->step(level);
        s->cum_cost += r.record.cost;
        s->cum_effect += r.record.loss_null - r.record.loss_controlled;
        if (r.done) {
            s->status = SessionStatus::Finished;
        }
        if (!s->trace_path.empty()) {
            std::ofstream out(s->trace_path, std::ios::app);
            out << to_json(r.record).dump() << '\n';
        }
        nlohmann::json resp = record_json(r.record, s->config.econ.lambda);
        resp["state"] = state_json(*s);
        return resp;
    }

    nlohmann::json suggestion(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        if (!s->policy) {
            throw ServiceError(404, "no policy checkpoint loaded for this session");
        }
        if (s->status != SessionStatus::AwaitingDecision) {
            throw ServiceError(409, "session is " + to_string(s->status));
        }
        return {{"sd_level", s->policy->params->mean_sd_level(s->env->observation())},
                {"policy_id", s->policy->id},
                {"week", s->env->period()}};
    }

    nlohmann::json summary(const std::string& id)
    {
        auto s = find(id);
        std::lock_guard lock(s->mutex);
        nlohmann::json history = nlohmann::json::array();
        for (const auto& r : s->env->history()) {
            history.push_back(record_json(r, s->config.econ.lambda));
        }
        const auto& acc = s->env->account();
        return {{"state", state_json(*s)},
                {"history", history},
                {"total_cost", acc.total_cost()},
                {"effect", acc.effect()},
                {"pw_nhb", acc.periods.empty() ? 0.0 : acc.pw_nhb()},
                {"cum_nhb", s->env->cum_nhb()}};
    }

    void remove(const std::string& id)
    {
        std::unique_lock lock(map_mutex_);
        if (sessions_.erase(id) == 0) {
            throw ServiceError(404, "unknown session " + id);
        }
    }

    std::size_t size() const
    {
        std::shared_lock lock(map_mutex_);
        return sessions_.size();
    }

  private:
    std::shared_ptr<Session> find(const std::string& id)
    {
        std::shared_lock lock(map_mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) {
            throw ServiceError(404, "unknown session " + id);
        }
        return it->second;
    }

    std::string make_id()
    {
        char buf[24];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_()));
        return buf;
    }

    nlohmann::json state_json(const Session& s) const
    {
        const EpidemicEnv& env = *s.env;
        nlohmann::json j{{"id", s.id},
                         {"seed", s.seed},
                         {"status", to_string(s.status)},
                         {"week", env.period()},
                         {"n_decisions", s.config.n_decisions},
                         {"sd_max", s.config.sd_max},
                         {"lambda", s.config.econ.lambda},
                         {"cum_nhb", env.cum_nhb()},
                         {"cum_cost", s.cum_cost},
                         {"cum_effect", s.cum_effect},
                         {"observation", observation_to_json(env.observation())},
                         {"policy_id", s.policy ? nlohmann::json(s.policy->id) : nlohmann::json(nullptr)}};
        if (s.status == SessionStatus::Aborted) {
            j["abort_reason"] = s.abort_reason;
        }
        return j;
    }

    static nlohmann::json record_json(const DecisionRecord& r, double lambda)
    {
        return {{"week", r.t},
                {"sd_level", r.sd_level},
                {"reward", r.reward},
                {"loss_null", r.loss_null},
                {"loss_controlled", r.loss_controlled},
                {"cost", r.cost},
                {"lambda", lambda},
                {"cum_nhb", r.cum_nhb},
                {"observation", observation_to_json(r.observation)},
                {"next_observation", observation_to_json(r.next_observation)},
                {"done", r.done}};
    }

    std::shared_ptr<const NullBaseline> baseline_for(const ScenarioConfig& sc)
    {
        nlohmann::json key = scenario_config_to_json(sc);
        key.erase("econ");
        key.erase("train");
        key.erase("sensitivity");
        key["env"].erase("sd_max");
        key["env"].erase("strict_actions");
        const std::string k = key.dump();
        std::lock_guard lock(baseline_mutex_);
        auto it = baselines_.find(k);
        if (it != baselines_.end()) {
            return it->second;
        }
        std::shared_ptr<const NullBaseline> b;
        if (!sc.baseline.path.empty()) {
            std::ifstream in(sc.baseline.path);
            if (!in) {
                throw ServiceError(422, "cannot open baseline " + sc.baseline.path);
            }
            b = std::make_shared<const NullBaseline>(baseline_from_json(nlohmann::json::parse(in)));
        } else {
            logger()->info("service: building null baseline (K = {})", sc.baseline.episodes);
            try {
                b = std::make_shared<const NullBaseline>(
                    build_null_baseline(pop_, sc.env, sc.baseline.episodes, sc.baseline.seed));
            } catch (const std::runtime_error& e) {
                throw ServiceError(422, std::string("null baseline failed: ") + e.what());
            }
        }
        baselines_.emplace(k, b);
        return b;
    }

    void load_checkpoints(const std::string& dir)
    {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            std::ifstream in(f);
            try {
                const auto c = checkpoint_from_json(nlohmann::json::parse(in));
                policies_.push_back({f.stem().string(), std::make_shared<const PolicyParams>(c.params), c.lambda});
                logger()->info("service: loaded policy {} (SD_max {}, lambda {})", f.stem().string(),
                               c.params.sd_max, c.lambda);
            } catch (const std::exception& e) {
                logger()->debug("service: skipping {}: {}", f.string(), e.what());
            }
        }
    }

    LoadedPolicy find_policy(const std::string& id, double sd_max) const
    {
        for (const auto& p : policies_) {
            if (p.id == id) {
                if (std::abs(p.params->sd_max - sd_max) > 1e-12) {
                    throw ServiceError(422, "policy " + id + " was trained for a different SD_max");
                }
                return p;
            }
        }
        throw ServiceError(422, "unknown policy_id " + id);
    }

    std::optional<LoadedPolicy> match_policy(double sd_max, double lambda) const
    {
        for (const auto& p : policies_) {
            if (std::abs(p.params->sd_max - sd_max) <= 1e-12 && p.lambda == lambda) {
                return p;
            }
        }
        return std::nullopt;
    }

    std::shared_ptr<const Population> pop_;
    ServiceOptions opts_;
    std::vector<LoadedPolicy> policies_;
    mutable std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex id_mutex_;
    Rng id_rng_;
    std::mutex baseline_mutex_;
    std::map<std::string, std::shared_ptr<const NullBaseline>> baselines_;
};

namespace detail {

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body)
{
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, int ok_status, F&& f)
{
    try {
        send_json(res, ok_status, f());
    } catch (const ServiceError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
        send_json(res, 422, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
        logger()->error("service: {}", e.what());
        send_json(res, 500, {{"error", e.what()}});
    }
}

inline nlohmann::json parse_body(const httplib::Request& req)
{
    if (req.body.empty()) {
        return nlohmann::json::object();
    }
    return nlohmann::json::parse(req.body);
}

}  // namespace detail

/// Registers the session routes on `server`.
inline void register_routes(httplib::Server& server, SessionManager& mgr)
{
    using detail::guarded;
    server.Post("/sessions", [&mgr](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 201, [&] { return mgr.create(detail::parse_body(req)); });
    });
    server.Get(R"(/sessions/([0-9a-f]+))", [&mgr](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return mgr.get(req.matches[1]); });
    });
    server.Post(R"(/sessions/([0-9a-f]+)/step)", [&mgr](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return mgr.step(req.matches[1], detail::parse_body(req)); });
    });
    server.Get(R"(/sessions/([0-9a-f]+)/suggestion)", [&mgr](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return mgr.suggestion(req.matches[1]); });
    });
    server.Get(R"(/sessions/([0-9a-f]+)/summary)", [&mgr](const httplib::Request& req, httplib::Response& res) {
        guarded(res, 200, [&] { return mgr.summary(req.matches[1]); });
    });
    server.Delete(R"(/sessions/([0-9a-f]+))", [&mgr](const httplib::Request& req, httplib::Response& res) {
        try {
            mgr.remove(req.matches[1]);
            res.status = 204;
        } catch (const ServiceError& e) {
            detail::send_json(res, e.status(), {{"error", e.what()}});
        }
    });
    server.Get("/policies", [&mgr](const httplib::Request&, httplib::Response& res) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& p : mgr.policies()) {
            arr.push_back({{"policy_id", p.id}, {"sd_max", p.params->sd_max}, {"lambda", p.lambda}});
        }
        detail::send_json(res, 200, arr);
    });
}

}  // namespace epinet
