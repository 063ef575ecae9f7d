#include "posthoc/reference_family.hpp"

#include <algorithm>
#include <string>

#include "posthoc/errors.hpp"

namespace posthoc {

ReferenceFamily::ReferenceFamily(std::size_t m, std::vector<RejectionSet> members)
    : m_(m), members_(std::move(members)) {
  if (m_ == 0) throw InputError("reference family needs m >= 1");
  for (std::size_t k = 0; k < members_.size(); ++k) {
    const auto& member = members_[k];
    validate_index_set(member.set, m_);
    if (member.zeta > member.set.size()) {
      throw InputError("zeta_" + std::to_string(k + 1) + " exceeds |R_" + std::to_string(k + 1) +
                       "|");
    }
    if (k > 0 && !is_subset(members_[k - 1].set, member.set)) nested_ = false;
  }
}

std::vector<std::size_t> ReferenceFamily::zetas() const {
  std::vector<std::size_t> out;
  out.reserve(members_.size());
  for (const auto& member : members_) out.push_back(member.zeta);
  return out;
}

ReferenceFamily ReferenceFamily::with_zetas(std::span<const std::size_t> zetas) const {
  if (zetas.size() != members_.size()) throw InputError("zeta list length must equal K");
  auto members = members_;
  for (std::size_t k = 0; k < members.size(); ++k) members[k].zeta = zetas[k];
  return ReferenceFamily(m_, std::move(members));
}

ThresholdFamily::ThresholdFamily(std::size_t m, std::vector<double> thresholds)
    : m_(m), thresholds_(std::move(thresholds)) {
  if (m_ == 0) throw InputError("threshold family needs m >= 1");
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    const double t = thresholds_[k];
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("thresholds must lie in [0,1]");
    if (k > 0 && t < thresholds_[k - 1]) throw InputError("thresholds must be non-decreasing");
  }
}

ReferenceFamily ThresholdFamily::materialize(const PValueVector& p) const {
  if (p.size() != m_) throw InputError("p-value count does not match the family's m");
  const auto order = p.ascending_order();
  std::vector<RejectionSet> members;
  members.reserve(thresholds_.size());
  std::size_t count = 0;
  for (std::size_t k = 0; k < thresholds_.size(); ++k) {
    while (count < order.size() && p[order[count]] < thresholds_[k]) ++count;
    IndexSet set(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(set.begin(), set.end());
    // zeta_k = k - 1, capped so the invariant zeta <= |R_k| holds for small sets.
    members.push_back({std::move(set), std::min(k, count)});
  }
  return ReferenceFamily(m_, std::move(members));
}

nlohmann::json to_json(const ReferenceFamily& family) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& member : family.members()) {
    members.push_back({{"set", to_one_based(member.set)}, {"zeta", member.zeta}});
  }
  return {{"m", family.m()}, {"members", members}};
}

ReferenceFamily reference_family_from_json(const nlohmann::json& j) {
  try {
    const auto m = j.at("m").get<std::size_t>();
    std::vector<RejectionSet> members;
    for (const auto& member : j.at("members")) {
      const auto raw = member.at("set").get<std::vector<std::int64_t>>();
      members.push_back({index_set_from_one_based(raw, m), member.at("zeta").get<std::size_t>()});
    }
    return ReferenceFamily(m, std::move(members));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed reference family JSON: ") + e.what());
  }
}

}  // namespace posthoc
