#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "posthoc/bounds.hpp"
#include "posthoc/calibration.hpp"
#include "posthoc/gaussian_models.hpp"
#include "posthoc/templates.hpp"

namespace posthoc {

// How lambda is chosen: fixed at alpha (Simes), Monte Carlo from the known
// least-favorable law, or sign-flip randomization of raw data.
enum class Method { simes, mc_known, sign_flip };

Method parse_method(const std::string& text);
std::string to_string(Method method);

inline constexpr std::size_t kDefaultBKnown = 10'000;
inline constexpr std::size_t kDefaultBSignFlip = 1'000;

struct CalibrationRequest {
  TemplateKind kind = TemplateKind::linear;
  std::size_t K = 0;  // 0 means m
  double alpha = 0.25;
  Method method = Method::simes;
  Covariance cov;
  Sidedness side = Sidedness::two;
  std::size_t B = 0;  // 0 means the method's default
  std::uint64_t seed = 0;
  bool step_down = false;
};

// Reads the fields above from a JSON object; absent fields keep defaults.
CalibrationRequest calibration_request_from_json(const nlohmann::json& j);

struct CalibrationResult {
  CalibrationRequest request;
  Calibration calibration;
  Template tpl;
  std::vector<SignVector> transforms;  // sign-flip only
};

// Shared by the CLI and the service. `data` is required for sign-flip; when
// given, p-values are computed from it and `p` is ignored.
CalibrationResult run_calibration(const CalibrationRequest& request,
                                  const std::optional<PValueVector>& p,
                                  const Eigen::MatrixXd* data);

nlohmann::json to_json(const CalibrationResult& result);

// The threshold family of a calibration JSON document.
ThresholdFamily threshold_family_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Bound& b);

// CSV "k,vbar,sbar,k_argmin" for the top-k' sets, k' = 1..N.
std::string top_k_csv(const std::vector<Bound>& curve);

}  // namespace posthoc
