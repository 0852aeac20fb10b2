#pragma once

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

// Eigen-based headers first: httplib pulls in <resolv.h>, whose _res macro
// collides with Eigen parameter names.
#include "analyze.hpp"

#include <httplib.h>

namespace drqft {

struct response {
    int status = 200;
    io::json body;
};

// Problems posted to the service. Boundaries depend on the plant family, fast
// controller and specs only, so they are cached per (omega, kind) and survive
// slow-controller edits.
class session_store {
public:
    response post_problem(const std::string& text) {
        io::json j;
        try {
            j = io::json::parse(text);
        } catch (const io::json::parse_error& e) {
            return bad(400, "schema", std::string("malformed JSON: ") + e.what());
        }
        return guarded([&]() -> response {
            auto s = std::make_shared<session>();
            s->prob = parse_problem(j);
            s->slow = s->prob.g_slow;
            std::lock_guard lock(mu_);
            const std::string id = "p" + std::to_string(++next_id_);
            sessions_[id] = std::move(s);
            return {201, {{"id", id}}};
        });
    }

    response boundaries(const std::string& id, std::optional<double> omega) {
        auto s = find(id);
        if (!s) return bad(404, "not_found", "unknown problem id " + id);
        if (omega && !(*omega > 0 && std::isfinite(*omega))) return bad(422, "invalid_argument", "omega must be positive");
        return guarded([&]() -> response {
            std::lock_guard lock(s->mu);
            std::vector<double> ws = omega ? std::vector<double>{*omega} : s->prob.specs.design_frequencies;
            io::json out = io::json::array();
            for (double w : ws)
                for (const auto& b : s->boundaries_at(w)) out.push_back(io::to_json(b));
            return {200, {{"boundaries", out}}};
        });
    }

    response controller(const std::string& id, const std::string& text) {
        auto s = find(id);
        if (!s) return bad(404, "not_found", "unknown problem id " + id);
        io::json e;
        try {
            e = io::json::parse(text);
        } catch (const io::json::parse_error& ex) {
            return bad(400, "schema", std::string("malformed JSON: ") + ex.what());
        }
        return guarded([&]() -> response {
            std::lock_guard lock(s->mu);
            const rational_tf g = apply_controller_edit(s->prob, e);
            const auto loop = s->prob.loop(g);
            const auto verdict = assess(loop, s->prob.grid_points);
            std::vector<boundary> all;
            for (double w : s->prob.specs.design_frequencies)
                for (const auto& b : s->boundaries_at(w)) all.push_back(b);
            const auto report = validate_design(loop, all, s->prob.specs, s->prob.sweep_points);
            s->slow = g;
            return {200,
                    {{"g_slow", io::to_json(g)},
                     {"L0_curve", io::to_json(nichols_curve_of(loop.open_loop(), s->prob.grid_points, false))},
                     {"validation", io::to_json(report)},
                     {"margins", io::to_json(verdict.margins)},
                     {"stability", io::to_json(verdict)}}};
        });
    }

    response simulate_request(const std::string& id, const std::string& text) {
        auto s = find(id);
        if (!s) return bad(404, "not_found", "unknown problem id " + id);
        io::json req = io::json::object();
        if (!text.empty()) {
            try {
                req = io::json::parse(text);
            } catch (const io::json::parse_error& ex) {
                return bad(400, "schema", std::string("malformed JSON: ") + ex.what());
            }
        }
        return guarded([&]() -> response {
            std::lock_guard lock(s->mu);
            const auto& p = s->prob;
            reference_signal ref = p.specs.reference;
            if (req.contains("reference")) ref = detail::reference_from_json(req["reference"]);
            const double t_end = req.contains("t_end") ? detail::number(req, "t_end") : p.t_end;
            const int M = req.contains("substeps") ? static_cast<int>(detail::number(req, "substeps")) : p.substeps;
            const auto loop = p.loop(s->slow);
            const auto tr = simulate(loop, ref, t_end, M);
            io::json out = {{"trace", io::to_json(tr)}};
            try {
                const double w0 = ref.kind == reference_kind::step ? 0.0 : ref.b;
                out["ripple"] = io::to_json(ripple_metrics(tr, p.timing.Ts, w0));
            } catch (const error& e) {
                out["ripple"] = {{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
            }
            return {200, out};
        });
    }

    // Boundary evaluations performed so far, across sessions.
    long boundary_computations() const { return computations_.load(); }

private:
    struct session {
        problem prob;
        rational_tf slow;
        std::optional<lifted_family> lifted;
        std::map<std::pair<double, int>, boundary> cache;
        std::mutex mu;
        std::atomic<long>* counter = nullptr;

        std::vector<boundary> boundaries_at(double w) {
            const auto loop = prob.loop(prob.g_slow);
            const bool below = w <= prob.timing.slow_nyquist() * (1 + 1e-12);
            std::vector<std::pair<boundary_kind, bool>> kinds{
                {boundary_kind::stability, below && prob.specs.mu.has_value()},
                {boundary_kind::dtrack, below && prob.specs.delta1.has_value()},
                {boundary_kind::ctrack, prob.specs.delta2.has_value()}};
            std::vector<boundary> out;
            for (auto [k, on] : kinds) {
                if (!on) continue;
                const auto key = std::make_pair(w, static_cast<int>(k));
                auto it = cache.find(key);
                if (it == cache.end()) {
                    if (!lifted) lifted = lift_family(prob.family, prob.g_fast, prob.timing);
                    spec_set one = prob.specs;
                    one.design_frequencies = {w};
                    if (k != boundary_kind::stability) one.mu.reset();
                    if (k != boundary_kind::dtrack) one.delta1.reset();
                    if (k != boundary_kind::ctrack) one.delta2.reset();
                    auto bs = compute_boundaries(loop, *lifted, one, phase_grid{prob.phase_step});
                    if (counter) ++*counter;
                    auto b = bs.at(0);
                    // labels follow the position in the design-frequency list when present
                    const auto& df = prob.specs.design_frequencies;
                    for (std::size_t i = 0; i < df.size(); ++i)
                        if (df[i] == w) {
                            const std::string tag = std::to_string(i + 1);
                            b.label = k == boundary_kind::ctrack ? "#" + tag : std::string(to_string(k)) + "@" + tag;
                            break;
                        }
                    it = cache.emplace(key, std::move(b)).first;
                }
                out.push_back(it->second);
            }
            return out;
        }
    };

    std::shared_ptr<session> find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) return nullptr;
        it->second->counter = &computations_;
        return it->second;
    }

    static response bad(int status, const std::string& reason, const std::string& message) {
        return {status, {{"error", reason}, {"message", message}}};
    }

    template <class F>
    static response guarded(F&& f) {
        try {
            return f();
        } catch (const error& e) {
            const int status = e.code() == error_code::schema ? 400 : 422;
            return bad(status, std::string(to_string(e.code())), e.what());
        } catch (const io::json::exception& e) {
            return bad(400, "schema", e.what());
        } catch (const std::exception& e) {
            return bad(422, "invalid_argument", e.what());
        }
    }

    std::mutex mu_;
    std::map<std::string, std::shared_ptr<session>> sessions_;
    long next_id_ = 0;
    std::atomic<long> computations_{0};
};

inline void install_routes(httplib::Server& srv, session_store& store) {
    auto reply = [](httplib::Response& res, const response& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    srv.Post("/problems", [&store, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, store.post_problem(req.body));
    });
    srv.Get(R"(/problems/([^/]+)/boundaries)", [&store, reply](const httplib::Request& req, httplib::Response& res) {
        std::optional<double> w;
        if (req.has_param("omega")) {
            const auto v = req.get_param_value("omega");
            char* end = nullptr;
            const double x = std::strtod(v.c_str(), &end);
            if (end == v.c_str() || *end != '\0') {
                reply(res, {422, {{"error", "invalid_argument"}, {"message", "omega is not a number"}}});
                return;
            }
            w = x;
        }
        reply(res, store.boundaries(req.matches[1], w));
    });
    srv.Post(R"(/problems/([^/]+)/controller)", [&store, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, store.controller(req.matches[1], req.body));
    });
    srv.Post(R"(/problems/([^/]+)/simulate)", [&store, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, store.simulate_request(req.matches[1], req.body));
    });
}

} // namespace drqft
