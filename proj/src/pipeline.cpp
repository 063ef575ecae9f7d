#include "posthoc/pipeline.hpp"

#include <memory>
#include <sstream>

#include "posthoc/errors.hpp"

namespace posthoc {

Method parse_method(const std::string& text) {
  if (text == "simes") return Method::simes;
  if (text == "mc-known") return Method::mc_known;
  if (text == "sign-flip") return Method::sign_flip;
  throw InputError("method must be simes, mc-known or sign-flip");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::simes:
      return "simes";
    case Method::mc_known:
      return "mc-known";
    case Method::sign_flip:
      return "sign-flip";
  }
  return "simes";
}

CalibrationRequest calibration_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("calibration request must be a JSON object");
  CalibrationRequest r;
  try {
    if (j.contains("template")) r.kind = parse_template_kind(j.at("template").get<std::string>());
    if (j.contains("K")) r.K = j.at("K").get<std::size_t>();
    if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
    if (j.contains("method")) r.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("cov")) r.cov = Covariance::parse(j.at("cov").get<std::string>());
    if (j.contains("sided")) r.side = parse_sidedness(j.at("sided").get<std::string>());
    if (j.contains("B")) r.B = j.at("B").get<std::size_t>();
    if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("step_down")) r.step_down = j.at("step_down").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed calibration request: ") + e.what());
  }
  return r;
}

CalibrationResult run_calibration(const CalibrationRequest& request,
                                  const std::optional<PValueVector>& p,
                                  const Eigen::MatrixXd* data) {
  check_alpha(request.alpha);
  if (request.method == Method::sign_flip && data == nullptr) {
    throw InputError("sign-flip calibration needs the raw data matrix");
  }
  if (data == nullptr && !p) throw InputError("no p-values given");
  const PValueVector pv = data != nullptr ? pvalues(test_statistics(*data), request.side) : *p;
  const std::size_t m = pv.size();
  const std::size_t K = request.K == 0 ? m : request.K;
  if (K > m) {
    throw InputError("K = " + std::to_string(K) + " exceeds m = " + std::to_string(m));
  }

  CalibrationResult result{request, {}, Template::linear(m, K), {}};
  if (request.method == Method::simes) {
    if (request.kind != TemplateKind::linear) {
      throw InputError("the simes method uses the linear template");
    }
    if (request.step_down) throw InputError("step-down needs a resampling method");
    result.calibration = fixed_calibration(result.tpl, request.alpha);
    return result;
  }

  std::shared_ptr<const NullPool> pool;
  std::vector<std::string> warnings;
  if (request.method == Method::mc_known) {
    const std::size_t B = request.B == 0 ? kDefaultBKnown : request.B;
    if (B < 1) throw InputError("B must be at least 1");
    const NullJointSampler sampler(m, request.cov, request.side);
    if (request.kind == TemplateKind::balanced) {
      result.tpl = fit_balanced_known(sampler, K, B, substream(request.seed, 1));
    }
    pool = std::make_shared<const NullPool>(sampler.draw_pool(B, substream(request.seed, 2)));
  } else {
    const std::size_t B = request.B == 0 ? kDefaultBSignFlip : request.B;
    if (B < 2) throw InputError("randomization needs B >= 2");
    result.transforms = draw_transforms(static_cast<std::size_t>(data->cols()), B, request.seed);
    pool = std::make_shared<const NullPool>(sign_flip_pool(*data, result.transforms, request.side));
    if (request.kind == TemplateKind::balanced) {
      result.tpl = balanced_from_pool(*pool, K, TemplateOrigin::observed_data);
      warnings.push_back(
          "balanced template fitted on the observed data: JER control is empirical only");
    }
  }

  const PoolCalibrator calibrator(result.tpl, pool);
  if (request.step_down) {
    result.calibration = step_down(
        [&](const IndexSet& A) {
          return calibrator.calibrate(request.alpha, A, CalibrationMode::single_step);
        },
        result.tpl, pv, request.alpha);
  } else {
    result.calibration =
        calibrator.calibrate(request.alpha, full_index_set(m), CalibrationMode::single_step);
  }
  for (auto& w : warnings) result.calibration.warnings.push_back(std::move(w));
  return result;
}

nlohmann::json to_json(const CalibrationResult& result) {
  const auto& c = result.calibration;
  const auto& r = result.request;
  nlohmann::json j;
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["B"] = c.B;
  j["mode"] = to_string(c.mode);
  j["K"] = c.K;
  j["m"] = c.m;
  j["method"] = to_string(r.method);
  j["template"] = to_json(result.tpl, false);
  j["thresholds"] = c.thresholds;
  j["seed"] = r.seed;
  j["cov"] = r.cov.to_string();
  j["sided"] = to_string(r.side);
  j["iterations"] = c.iterations;
  j["set_used"] = to_one_based(c.set_used);
  j["psi_sample"] = c.psi_sample;
  if (!result.transforms.empty()) {
    std::vector<std::string> encoded;
    encoded.reserve(result.transforms.size());
    for (const auto& s : result.transforms) encoded.push_back(encode_signs(s));
    j["transforms"] = encoded;
  }
  j["warnings"] = c.warnings;
  return j;
}

ThresholdFamily threshold_family_from_json(const nlohmann::json& j) {
  try {
    return ThresholdFamily(j.at("m").get<std::size_t>(),
                           j.at("thresholds").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed calibration JSON: ") + e.what());
  }
}

nlohmann::json to_json(const Bound& b) {
  return {{"vbar", b.vbar}, {"sbar", b.sbar}, {"k_argmin", b.k_argmin}};
}

std::string top_k_csv(const std::vector<Bound>& curve) {
  std::ostringstream out;
  out << "k,vbar,sbar,k_argmin\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << i + 1 << ',' << curve[i].vbar << ',' << curve[i].sbar << ',' << curve[i].k_argmin
        << '\n';
  }
  return out.str();
}

}  // namespace posthoc
