#pragma once

// HTTP JSON API over preloaded trees plus an in-memory pendulum session
// store. Trees and black boxes are immutable once loaded; each session has
// its own lock, so explanation requests never wait on one another.

#include "lmtcfe/app/commands.hpp"

#include <httplib.h>

#include <atomic>
#include <csignal>
#include <map>
#include <memory>
#include <mutex>
#include <pthread.h>
#include <thread>

namespace lmtcfe::app {

class Service {
 public:
  Service(std::vector<Model> models, EngineSettings engine) : models_(std::move(models)), engine_(std::move(engine)) {
    if (models_.empty()) throw InputError("service needs at least one model");
  }

  const Model& model(const std::string& name) const {
    if (name.empty()) return models_.front();
    for (const auto& m : models_) {
      if (m.name == name) return m;
    }
    throw LookupError("unknown model \"" + name + "\"");
  }

  void mount(httplib::Server& svr) {
    svr.Get("/health", [](const httplib::Request&, httplib::Response& res) { reply(res, Json{{"status", "ok"}}); });
    svr.Get("/model", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return model_summary(model(req.has_param("model") ? req.get_param_value("model") : "")); });
    });
    svr.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return predict(parse_body(req)); });
    });
    svr.Post("/explain", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return explain(parse_body(req)); });
    });
    svr.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return create_session(req.body.empty() ? Json::object() : parse_body(req)); });
    });
    svr.Post(R"(/session/([^/]+)/step)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return step(req.matches[1], req.body.empty() ? Json::object() : parse_body(req)); });
    });
    svr.Post(R"(/session/([^/]+)/set_state)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(res, [&] { return set_state(req.matches[1], parse_body(req)); });
    });
  }

  Json model_summary(const Model& m) const {
    const auto& t = *m.tree;
    Json names = Json::array();
    for (const auto& other : models_) names.push_back(other.name);
    return Json{{"name", m.name},
                {"environment", m.env.name},
                {"input_dim", t.input_dim()},
                {"output_dim", t.output_dim()},
                {"leaf_count", t.leaf_count()},
                {"depth", t.max_depth()},
                {"feature_names", t.feature_names()},
                {"output_names", t.output_names()},
                {"input_bounds", json_detail::bounds_json(t.input_bounds())},
                {"output_bounds", json_detail::bounds_json(t.output_bounds())},
                {"models", std::move(names)}};
  }

  Json predict(const Json& body) const {
    const Model& m = model(model_key(body));
    if (!body.contains("x")) throw InputError("missing field x");
    const Vector x = json_vector(body["x"], m.tree->input_dim(), "x");
    if (!within(x, m.tree->input_bounds())) throw InputError("x outside input bounds");
    return Json{{"y", to_std(m.env.blackbox->predict(x))},
                {"y_lmt", to_std(m.tree->predict(x))},
                {"leaf_id", m.tree->locate_leaf(x)}};
  }

  Json explain(const Json& body) const {
    const Model& m = model(model_key(body));
    return explanation_json(run_explanation(m, engine_, explain_request_from_json(body, m)));
  }

  Json create_session(const Json& body) {
    if (!body.is_object()) throw InputError("request body must be a JSON object");
    std::string env = "pendulum";
    if (body.contains("env")) {
      if (!body["env"].is_string()) throw InputError("env must be a string");
      env = body["env"];
    }
    if (env != "pendulum" && env != "pendulum-raw" && env != "pendulum-engineered") {
      throw InputError("sessions simulate the pendulum only, got env \"" + env + "\"");
    }
    auto s = std::make_shared<Session>();
    s->state = pendulum::PendulumState::make(number_or(body, "theta", std::numbers::pi),
                                             number_or(body, "theta_dot", 0.0));
    std::string id;
    {
      std::lock_guard lock(sessions_mu_);
      id = "s" + std::to_string(++session_counter_);
      sessions_[id] = s;
    }
    return Json{{"session_id", id}, {"state", state_json(s->state)}, {"observation", observation_json(s->state)}};
  }

  Json step(const std::string& id, const Json& body) {
    if (!body.is_object()) throw InputError("request body must be a JSON object");
    auto s = session(id);
    std::lock_guard lock(s->mu);
    double torque = 0.0;
    if (body.contains("torque") && !body["torque"].is_null()) {
      if (!body["torque"].is_number()) throw InputError("torque must be a number");
      torque = body["torque"].get<double>();
      if (!std::isfinite(torque)) throw InputError("torque must be finite");
    } else if (body.value("auto", false)) {
      torque = pendulum_policy(s->state);
    } else {
      throw InputError("step needs a torque or \"auto\": true");
    }
    torque = pendulum::clamp_torque(torque);
    s->state = pendulum::step(s->state, torque);
    ++s->steps;
    return Json{{"state", state_json(s->state)},
                {"observation", observation_json(s->state)},
                {"action", torque},
                {"t", static_cast<double>(s->steps) * pendulum::kDt}};
  }

  Json set_state(const std::string& id, const Json& body) {
    if (!body.is_object() || !body.contains("theta") || !body.contains("theta_dot")) {
      throw InputError("set_state needs theta and theta_dot");
    }
    const double theta = number_or(body, "theta", 0.0);
    const double theta_dot = number_or(body, "theta_dot", 0.0);
    auto s = session(id);
    std::lock_guard lock(s->mu);
    s->state = pendulum::PendulumState::make(theta, theta_dot);
    return Json{{"state", state_json(s->state)}, {"observation", observation_json(s->state)}};
  }

 private:
  struct Session {
    std::mutex mu;
    pendulum::PendulumState state;
    std::size_t steps = 0;
  };

  static void reply(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static void handle(httplib::Response& res, F&& fn) {
    try {
      reply(res, fn());
    } catch (const LookupError& e) {
      reply(res, Json{{"error", e.what()}}, 404);
    } catch (const InputError& e) {
      reply(res, Json{{"error", e.what()}}, 400);
    } catch (const ParseError& e) {
      reply(res, Json{{"error", e.what()}}, 400);
    } catch (const std::exception& e) {
      reply(res, Json{{"error", e.what()}}, 500);
    }
  }

  static Json parse_body(const httplib::Request& req) {
    try {
      return Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      throw ParseError(std::string("malformed JSON body: ") + e.what());
    }
  }

  static std::string model_key(const Json& body) {
    if (!body.is_object()) throw InputError("request body must be a JSON object");
    if (!body.contains("model")) return "";
    if (!body["model"].is_string()) throw InputError("model must be a string");
    return body["model"];
  }

  static double number_or(const Json& body, const char* key, double fallback) {
    if (!body.contains(key)) return fallback;
    if (!body[key].is_number()) throw InputError(std::string(key) + " must be a number");
    const double v = body[key].get<double>();
    if (!std::isfinite(v)) throw InputError(std::string(key) + " must be finite");
    return v;
  }

  static Json state_json(const pendulum::PendulumState& s) {
    return Json{{"theta", s.theta}, {"theta_dot", s.theta_dot}};
  }

  static Json observation_json(const pendulum::PendulumState& s) {
    const auto o = pendulum::to_raw(s);
    return Json{{"x", o.x}, {"y", o.y}, {"theta_dot", o.theta_dot}};
  }

  std::shared_ptr<Session> session(const std::string& id) {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw LookupError("unknown session \"" + id + "\"");
    return it->second;
  }

  std::vector<Model> models_;
  EngineSettings engine_;
  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t session_counter_ = 0;
};

inline std::vector<Model> service_models(const RunConfig& cfg) {
  std::vector<Model> models;
  if (cfg.service.models.empty()) {
    models.push_back(load_main_model(cfg));
  } else {
    for (const auto& e : cfg.service.models) models.push_back(load_model(e.name, e.environment, e.tree, cfg));
  }
  return models;
}

/// Blocks until SIGINT or SIGTERM, then drains in-flight requests.
inline int serve(const RunConfig& cfg, std::ostream& out) {
  Service service(service_models(cfg), cfg.engine);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  httplib::Server svr;
  // SO_REUSEPORT, which httplib sets by default, would let a second server share a busy port.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  service.mount(svr);
  if (!svr.bind_to_port(cfg.service.host, cfg.service.port)) {
    throw EnvironmentError("cannot bind " + cfg.service.host + ":" + std::to_string(cfg.service.port));
  }
  out << "listening on " << cfg.service.host << ":" << cfg.service.port << std::endl;
  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    signalled = true;
    svr.stop();
  });
  svr.listen_after_bind();
  if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  out << "stopped" << std::endl;
  return kOk;
}

}  // namespace lmtcfe::app
