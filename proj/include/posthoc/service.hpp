#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "posthoc/pipeline.hpp"
#include "posthoc/pvalues.hpp"
#include "posthoc/reference_family.hpp"

namespace httplib {
class Server;
}

namespace posthoc {

struct ServiceOptions {
  std::size_t max_m = 1'000'000;
  // Calibrations with m * B above this run in the background (202 + poll URL).
  std::size_t sync_limit = 10'000'000;
  std::chrono::seconds ttl{24 * 3600};
  // Written by save_snapshot() and read on construction when it exists.
  std::string snapshot_path;
  // Clock used for session expiry, replaceable in tests.
  std::function<std::chrono::system_clock::time_point()> now = [] {
    return std::chrono::system_clock::now();
  };
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// In-memory session store behind the HTTP endpoints. Every handler is a plain
// method so it can be exercised without a socket; bind() wires them to routes.
//
//   GET  /                                       endpoint listing
//   POST /sessions                               {pvalues:[...]} | {data:{matrix, n}}
//   GET  /sessions/{id}                          m, n, p-values, calibration ids
//   POST /sessions/{id}/calibrations             calibration request
//   GET  /sessions/{id}/calibrations/{cid}       result, or 202 while running
//   POST /sessions/{id}/bound                    {calibration_id, set | top_k}
//
// Indices on the wire are 1-based.
class Service {
 public:
  explicit Service(ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ServiceResponse index() const;
  ServiceResponse create_session(const std::string& body);
  ServiceResponse get_session(const std::string& id) const;
  ServiceResponse create_calibration(const std::string& id, const std::string& body);
  ServiceResponse get_calibration(const std::string& id, const std::string& cid) const;
  ServiceResponse bound(const std::string& id, const std::string& body) const;

  // Drops sessions older than the TTL; returns how many were removed.
  std::size_t purge_expired();
  // Blocks until every background calibration has finished.
  void wait_idle();

  void save_snapshot() const;
  std::size_t session_count() const;

  void bind(httplib::Server& server);

 private:
  struct Entry {
    enum class State { running, done, failed } state = State::running;
    nlohmann::json result;
    std::shared_ptr<const ThresholdFamily> family;
    std::shared_ptr<const PValueVector> p;  // the p-values the family was calibrated on
    int error_status = 0;
    std::string error;
  };

  struct Session {
    std::string id;
    std::shared_ptr<const PValueVector> p;
    std::shared_ptr<const Eigen::MatrixXd> data;
    std::chrono::system_clock::time_point created;
    mutable std::shared_mutex mutex;
    std::map<std::string, std::shared_ptr<Entry>> calibrations;
    std::size_t next_calibration = 1;
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_session_id();
  void load_snapshot();
  static void run_job(const std::shared_ptr<Session>& session, const std::shared_ptr<Entry>& entry,
                      const CalibrationRequest& request);

  ServiceOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mutex_;
  std::uint64_t id_state_;
  std::mutex jobs_mutex_;
  std::vector<std::thread> jobs_;
};

}  // namespace posthoc
