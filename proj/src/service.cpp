#include "posthoc/service.hpp"

#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "posthoc/bounds.hpp"
#include "posthoc/errors.hpp"
#include "posthoc/gaussian_models.hpp"

namespace posthoc {

namespace {

using nlohmann::json;

ServiceResponse error(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw InputError(std::string("body is not valid JSON: ") + e.what());
  }
}

std::size_t nominal_B(const CalibrationRequest& r) {
  if (r.method == Method::simes) return 0;
  if (r.B != 0) return r.B;
  return r.method == Method::mc_known ? kDefaultBKnown : kDefaultBSignFlip;
}

std::shared_ptr<const PValueVector> pvalues_used(const std::shared_ptr<const PValueVector>& p,
                                                 const Eigen::MatrixXd* data, Sidedness side) {
  if (data == nullptr) return p;
  return std::make_shared<const PValueVector>(pvalues(test_statistics(*data), side));
}

Eigen::MatrixXd matrix_from_json(const json& rows, std::size_t max_m) {
  if (!rows.is_array() || rows.empty()) throw InputError("data.matrix must be a non-empty array");
  if (rows.size() > max_m) throw RefusedError("m exceeds the session limit");
  const std::size_t m = rows.size();
  if (!rows[0].is_array() || rows[0].empty()) throw InputError("data.matrix rows must be arrays");
  const std::size_t n = rows[0].size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < m; ++i) {
    if (!rows[i].is_array() || rows[i].size() != n) {
      throw InputError("data.matrix row " + std::to_string(i + 1) + " has the wrong length");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!rows[i][j].is_number()) throw InputError("data.matrix entries must be numbers");
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return X;
}

json matrix_to_json(const Eigen::MatrixXd& X) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < X.cols(); ++j) row.push_back(X(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

bool localhost_origin(const std::string& origin) {
  static const std::regex pattern(R"(https?://(localhost|127\.0\.0\.1|\[::1\])(:\d+)?)");
  return std::regex_match(origin, pattern);
}

}  // namespace

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  std::random_device rd;
  id_state_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  if (!options_.snapshot_path.empty()) load_snapshot();
}

Service::~Service() { wait_idle(); }

ServiceResponse Service::index() const {
  const json endpoints = json::array({
      {{"method", "GET"}, {"path", "/"}, {"description", "this listing"}},
      {{"method", "POST"},
       {"path", "/sessions"},
       {"body", "{pvalues: [number]} | {data: {matrix: [[number]], n?}}"},
       {"description", "create a session; returns session_id, m and n"}},
      {{"method", "GET"},
       {"path", "/sessions/{id}"},
       {"description", "p-values and calibration ids of a session"}},
      {{"method", "POST"},
       {"path", "/sessions/{id}/calibrations"},
       {"body", "{template, K, alpha, method, cov, sided, B, seed, step_down}"},
       {"description", "calibrate; 202 with a poll URL when m*B is large"}},
      {{"method", "GET"},
       {"path", "/sessions/{id}/calibrations/{cid}"},
       {"description", "calibration result, 202 while running"}},
      {{"method", "POST"},
       {"path", "/sessions/{id}/bound"},
       {"body", "{calibration_id, set: [1-based index]} | {calibration_id, top_k}"},
       {"description", "post hoc bound {vbar, sbar, k_argmin}; top_k adds the curve"}},
  });
  return {200, json{{"service", "posthoc"},
                    {"max_m", options_.max_m},
                    {"sync_limit", options_.sync_limit},
                    {"endpoints", endpoints}}};
}

std::string Service::new_session_id() {
  std::lock_guard<std::mutex> lock(id_mutex_);
  id_state_ = splitmix64(id_state_);
  std::ostringstream out;
  out << std::hex << id_state_;
  return out.str();
}

ServiceResponse Service::create_session(const std::string& body) {
  purge_expired();
  auto session = std::make_shared<Session>();
  json out;
  try {
    const json j = parse_body(body);
    if (!j.is_object()) throw InputError("body must be a JSON object");
    const bool has_p = j.contains("pvalues");
    const bool has_data = j.contains("data");
    if (has_p == has_data) throw InputError("give exactly one of pvalues or data");
    if (has_p) {
      const json& values = j.at("pvalues");
      if (!values.is_array()) throw InputError("pvalues must be an array");
      if (values.size() > options_.max_m) throw RefusedError("m exceeds the session limit");
      std::vector<double> p;
      p.reserve(values.size());
      for (const auto& v : values) {
        if (!v.is_number()) throw InputError("pvalues must be numbers");
        p.push_back(v.get<double>());
      }
      session->p = std::make_shared<const PValueVector>(std::move(p));
    } else {
      const json& d = j.at("data");
      if (!d.is_object() || !d.contains("matrix")) throw InputError("data needs a matrix");
      auto X = std::make_shared<const Eigen::MatrixXd>(matrix_from_json(d.at("matrix"), options_.max_m));
      if (d.contains("n")) {
        if (!d.at("n").is_number_integer() ||
            d.at("n").get<std::int64_t>() != static_cast<std::int64_t>(X->cols())) {
          throw InputError("data.n does not match the matrix width");
        }
      }
      session->p = std::make_shared<const PValueVector>(pvalues(test_statistics(*X), Sidedness::two));
      session->data = std::move(X);
      out["n"] = session->data->cols();
    }
  } catch (const RefusedError& e) {
    return error(413, e.what());
  } catch (const InputError& e) {
    return error(400, e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  }
  session->id = new_session_id();
  session->created = options_.now();
  out["session_id"] = session->id;
  out["m"] = session->p->size();
  std::unique_lock lock(mutex_);
  sessions_[session->id] = std::move(session);
  return {201, out};
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  if (options_.now() - it->second->created > options_.ttl) return nullptr;
  return it->second;
}

ServiceResponse Service::get_session(const std::string& id) const {
  const auto session = find(id);
  if (!session) return error(404, "unknown session " + id);
  json out{{"session_id", id}, {"m", session->p->size()}, {"pvalues", std::vector<double>(session->p->values().begin(), session->p->values().end())}};
  if (session->data) out["n"] = session->data->cols();
  json ids = json::array();
  {
    std::shared_lock lock(session->mutex);
    for (const auto& [cid, entry] : session->calibrations) ids.push_back(cid);
  }
  out["calibrations"] = ids;
  return {200, out};
}

void Service::run_job(const std::shared_ptr<Session>& session, const std::shared_ptr<Entry>& entry,
                      const CalibrationRequest& request) {
  Entry done;
  try {
    const CalibrationResult result =
        run_calibration(request, *session->p, session->data.get());
    done.result = to_json(result);
    done.family = std::make_shared<const ThresholdFamily>(materialize(result.calibration));
    done.p = pvalues_used(session->p, session->data.get(), request.side);
    done.state = Entry::State::done;
  } catch (const InputError& e) {
    done.state = Entry::State::failed;
    done.error_status = 400;
    done.error = e.what();
  } catch (const std::exception& e) {
    done.state = Entry::State::failed;
    done.error_status = 500;
    done.error = e.what();
  }
  std::unique_lock lock(session->mutex);
  *entry = std::move(done);
}

ServiceResponse Service::create_calibration(const std::string& id, const std::string& body) {
  const auto session = find(id);
  if (!session) return error(404, "unknown session " + id);
  CalibrationRequest request;
  try {
    request = calibration_request_from_json(parse_body(body));
    check_alpha(request.alpha);
  } catch (const InputError& e) {
    return error(400, e.what());
  }
  if (request.method == Method::sign_flip && !session->data) {
    return error(422, "sign-flip calibration needs a session created from raw data");
  }

  auto entry = std::make_shared<Entry>();
  std::string cid;
  {
    std::unique_lock lock(session->mutex);
    cid = "c" + std::to_string(session->next_calibration++);
    session->calibrations[cid] = entry;
  }
  const std::string poll = "/sessions/" + id + "/calibrations/" + cid;

  const std::size_t B = nominal_B(request);
  if (B > 0 && session->p->size() > options_.sync_limit / B) {
    std::lock_guard<std::mutex> lock(jobs_mutex_);
    jobs_.emplace_back([session, entry, request] { run_job(session, entry, request); });
    return {202, json{{"calibration_id", cid}, {"status", "running"}, {"poll", poll}}};
  }
  run_job(session, entry, request);
  return get_calibration(id, cid);
}

ServiceResponse Service::get_calibration(const std::string& id, const std::string& cid) const {
  const auto session = find(id);
  if (!session) return error(404, "unknown session " + id);
  std::shared_lock lock(session->mutex);
  auto it = session->calibrations.find(cid);
  if (it == session->calibrations.end()) return error(404, "unknown calibration " + cid);
  const Entry& e = *it->second;
  switch (e.state) {
    case Entry::State::running:
      return {202, json{{"calibration_id", cid},
                        {"status", "running"},
                        {"poll", "/sessions/" + id + "/calibrations/" + cid}}};
    case Entry::State::failed: {
      auto r = error(e.error_status, e.error);
      r.body["calibration_id"] = cid;
      return r;
    }
    case Entry::State::done:
      break;
  }
  json out = e.result;
  out["calibration_id"] = cid;
  return {200, out};
}

ServiceResponse Service::bound(const std::string& id, const std::string& body) const {
  const auto session = find(id);
  if (!session) return error(404, "unknown session " + id);
  try {
    const json j = parse_body(body);
    if (!j.is_object() || !j.contains("calibration_id") || !j.at("calibration_id").is_string()) {
      throw InputError("calibration_id is required");
    }
    const std::string cid = j.at("calibration_id").get<std::string>();
    std::shared_ptr<const ThresholdFamily> family;
    std::shared_ptr<const PValueVector> p;
    {
      std::shared_lock lock(session->mutex);
      auto it = session->calibrations.find(cid);
      if (it == session->calibrations.end()) return error(404, "unknown calibration " + cid);
      const Entry& e = *it->second;
      if (e.state == Entry::State::running) return error(409, "calibration " + cid + " is running");
      if (e.state == Entry::State::failed) return error(409, "calibration " + cid + " failed");
      family = e.family;
      p = e.p;
    }
    const bool has_set = j.contains("set");
    const bool has_top = j.contains("top_k");
    if (has_set == has_top) throw InputError("give exactly one of set or top_k");
    if (has_set) {
      const auto indices = j.at("set").get<std::vector<std::int64_t>>();
      const IndexSet R = index_set_from_one_based(indices, p->size());
      return {200, to_json(posthoc::bound(R, *family, *p))};
    }
    const auto N = j.at("top_k").get<std::int64_t>();
    if (N < 0 || static_cast<std::size_t>(N) > p->size()) {
      throw InputError("top_k must be in 0..m");
    }
    const auto curve = top_k_curve(*family, *p, static_cast<std::size_t>(N));
    json out = curve.empty() ? to_json(Bound{}) : to_json(curve.back());
    std::vector<std::size_t> v, s;
    v.reserve(curve.size());
    s.reserve(curve.size());
    for (const auto& b : curve) {
      v.push_back(b.vbar);
      s.push_back(b.sbar);
    }
    out["curve"] = json{{"vbar", v}, {"sbar", s}};
    return {200, out};
  } catch (const InputError& e) {
    return error(400, e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  }
}

std::size_t Service::purge_expired() {
  const auto now = options_.now();
  std::unique_lock lock(mutex_);
  return std::erase_if(sessions_,
                       [&](const auto& kv) { return now - kv.second->created > options_.ttl; });
}

void Service::wait_idle() {
  std::vector<std::thread> jobs;
  {
    std::lock_guard<std::mutex> lock(jobs_mutex_);
    jobs.swap(jobs_);
  }
  for (auto& t : jobs) t.join();
}

std::size_t Service::session_count() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

void Service::save_snapshot() const {
  if (options_.snapshot_path.empty()) return;
  json sessions = json::array();
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, s] : sessions_) {
      json js{{"id", id},
              {"created", std::chrono::duration_cast<std::chrono::seconds>(
                              s->created.time_since_epoch())
                              .count()},
              {"pvalues", std::vector<double>(s->p->values().begin(), s->p->values().end())}};
      if (s->data) js["data"] = matrix_to_json(*s->data);
      json cals = json::object();
      std::shared_lock slock(s->mutex);
      for (const auto& [cid, e] : s->calibrations) {
        if (e->state == Entry::State::done) cals[cid] = e->result;
      }
      js["calibrations"] = cals;
      js["next_calibration"] = s->next_calibration;
      sessions.push_back(std::move(js));
    }
  }
  const std::string tmp = options_.snapshot_path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InputError("cannot write snapshot " + tmp);
    out << json{{"version", 1}, {"sessions", sessions}}.dump();
  }
  std::rename(tmp.c_str(), options_.snapshot_path.c_str());
}

void Service::load_snapshot() {
  std::ifstream in(options_.snapshot_path);
  if (!in) return;
  try {
    const json j = json::parse(in);
    for (const auto& js : j.at("sessions")) {
      auto s = std::make_shared<Session>();
      s->id = js.at("id").get<std::string>();
      s->created = std::chrono::system_clock::time_point(
          std::chrono::seconds(js.at("created").get<std::int64_t>()));
      s->p = std::make_shared<const PValueVector>(js.at("pvalues").get<std::vector<double>>());
      if (js.contains("data")) {
        s->data = std::make_shared<const Eigen::MatrixXd>(matrix_from_json(js.at("data"), options_.max_m));
      }
      for (const auto& [cid, result] : js.at("calibrations").items()) {
        auto e = std::make_shared<Entry>();
        e->result = result;
        e->family = std::make_shared<const ThresholdFamily>(threshold_family_from_json(result));
        e->p = pvalues_used(s->p, s->data.get(), parse_sidedness(result.at("sided").get<std::string>()));
        e->state = Entry::State::done;
        s->calibrations[cid] = std::move(e);
      }
      s->next_calibration = js.at("next_calibration").get<std::size_t>();
      sessions_[s->id] = std::move(s);
    }
  } catch (const std::exception& e) {
    throw InputError("unreadable snapshot " + options_.snapshot_path + ": " + e.what());
  }
}

void Service::bind(httplib::Server& server) {
  const auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.set_post_routing_handler([](const httplib::Request& req, httplib::Response& res) {
    const std::string origin = req.get_header_value("Origin");
    if (localhost_origin(origin)) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
  });
  server.Options(".*", [](const httplib::Request& req, httplib::Response& res) {
    if (localhost_origin(req.get_header_value("Origin"))) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.status = 204;
  });
  server.Get("/", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, index());
  });
  server.Post("/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_session(req.body));
  });
  server.Get(R"(/sessions/([^/]+))",
             [this, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, get_session(req.matches[1]));
             });
  server.Post(R"(/sessions/([^/]+)/calibrations)",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, create_calibration(req.matches[1], req.body));
              });
  server.Get(R"(/sessions/([^/]+)/calibrations/([^/]+))",
             [this, reply](const httplib::Request& req, httplib::Response& res) {
               reply(res, get_calibration(req.matches[1], req.matches[2]));
             });
  server.Post(R"(/sessions/([^/]+)/bound)",
              [this, reply](const httplib::Request& req, httplib::Response& res) {
                reply(res, bound(req.matches[1], req.body));
              });
}

}  // namespace posthoc
