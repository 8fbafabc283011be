#pragma once

// Prior-knowledge organ scores. Each of the four organs contributes a 0/1
// indicator for size alignment and one for charge alignment; the scores are
// the sums over organs.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"

namespace nanopk {

enum class Organ { Kidney, Spleen, Liver, Lung };

inline constexpr std::array<Organ, 4> kOrgans = {Organ::Kidney, Organ::Spleen, Organ::Liver, Organ::Lung};

inline std::string_view organ_name(Organ o) {
  static constexpr std::array<std::string_view, 4> names = {"kidney", "spleen", "liver", "lung"};
  return names[static_cast<std::size_t>(o)];
}

inline Organ parse_organ(std::string_view name) {
  const std::string key = detail::normalize_token(name);
  for (Organ o : kOrgans)
    if (organ_name(o) == key) return o;
  throw Error(Errc::UnknownOrgan, "'" + std::string(name) + "'");
}

inline Organ organ_from_index(int i) {
  if (i < 0 || i >= static_cast<int>(kOrgans.size())) throw Error(Errc::UnknownOrgan, "index " + std::to_string(i));
  return kOrgans[static_cast<std::size_t>(i)];
}

/// Hydrodynamic-diameter band in nm; an absent bound is unbounded.
struct SizeBand {
  std::optional<double> min;
  std::optional<double> max;
  bool min_inclusive = true;
  bool max_inclusive = true;

  bool contains(double hd) const {
    if (min && (min_inclusive ? hd < *min : hd <= *min)) return false;
    if (max && (max_inclusive ? hd > *max : hd >= *max)) return false;
    return true;
  }
};

struct OrganCriteria {
  std::array<SizeBand, 4> size;
  std::array<std::vector<Charge>, 4> charges;

  /// kidney < 6, lung < 100, liver [10, 200], spleen > 200 (nm);
  /// liver {+}, spleen {0, -}, lung {+}, kidney {0}.
  static OrganCriteria defaults() {
    OrganCriteria c;
    c.size[static_cast<std::size_t>(Organ::Kidney)] = {std::nullopt, 6.0, true, false};
    c.size[static_cast<std::size_t>(Organ::Spleen)] = {200.0, std::nullopt, false, true};
    c.size[static_cast<std::size_t>(Organ::Liver)] = {10.0, 200.0, true, true};
    c.size[static_cast<std::size_t>(Organ::Lung)] = {std::nullopt, 100.0, true, false};
    c.charges[static_cast<std::size_t>(Organ::Kidney)] = {Charge::Neutral};
    c.charges[static_cast<std::size_t>(Organ::Spleen)] = {Charge::Neutral, Charge::Negative};
    c.charges[static_cast<std::size_t>(Organ::Liver)] = {Charge::Positive};
    c.charges[static_cast<std::size_t>(Organ::Lung)] = {Charge::Positive};
    return c;
  }

  const SizeBand& band(Organ o) const { return size[static_cast<std::size_t>(o)]; }
  SizeBand& band(Organ o) { return size[static_cast<std::size_t>(o)]; }
  const std::vector<Charge>& admissible(Organ o) const { return charges[static_cast<std::size_t>(o)]; }
  std::vector<Charge>& admissible(Organ o) { return charges[static_cast<std::size_t>(o)]; }

  void validate() const {
    for (Organ o : kOrgans) {
      const auto& b = band(o);
      if ((b.min && !(*b.min > 0.0)) || (b.max && !(*b.max > 0.0)))
        throw Error(Errc::BadConfig, "size thresholds must be positive for " + std::string(organ_name(o)));
    }
  }
};

inline int organ_size_score(double hd, Organ organ, const OrganCriteria& criteria) {
  if (!(hd > 0.0)) throw Error(Errc::DomainError, "hydrodynamic diameter must be positive");
  return criteria.band(organ).contains(hd) ? 1 : 0;
}

inline int organ_charge_score(Charge charge, Organ organ, const OrganCriteria& criteria) {
  for (Charge c : criteria.admissible(organ))
    if (c == charge) return 1;
  return 0;
}

inline int f_size(const SampleRecord& record, const OrganCriteria& criteria) {
  if (!record.hd) throw Error(Errc::BadConfig, "f_size needs HD");
  int total = 0;
  for (Organ o : kOrgans) total += organ_size_score(*record.hd, o, criteria);
  return total;
}

inline int f_charge(const SampleRecord& record, const OrganCriteria& criteria) {
  if (!record.charge) throw Error(Errc::BadConfig, "f_charge needs Charge");
  int total = 0;
  for (Organ o : kOrgans) total += organ_charge_score(*record.charge, o, criteria);
  return total;
}

/// Config keys priors.size.<organ>.{min,max} and priors.charge.<organ>.
/// An empty size value removes the bound. Returns false for foreign keys.
inline bool set_criterion(OrganCriteria& c, const std::string& key, const std::string& value) {
  const std::string size_prefix = "priors.size.", charge_prefix = "priors.charge.";
  if (key.rfind(size_prefix, 0) == 0) {
    const std::string rest = key.substr(size_prefix.size());
    const auto dot = rest.rfind('.');
    if (dot == std::string::npos) throw Error(Errc::BadConfig, "expected " + key + ".min or .max");
    const Organ o = parse_organ(rest.substr(0, dot));
    const std::string bound = rest.substr(dot + 1);
    std::optional<double> v;
    if (!detail::trim(value).empty()) {
      v = detail::parse_number(value);
      if (!v) throw Error(Errc::BadConfig, key + ": not a number '" + value + "'");
    }
    if (bound == "min") c.band(o).min = v;
    else if (bound == "max") c.band(o).max = v;
    else throw Error(Errc::BadConfig, "unknown size bound '" + bound + "'");
    c.validate();
    return true;
  }
  if (key.rfind(charge_prefix, 0) == 0) {
    const Organ o = parse_organ(key.substr(charge_prefix.size()));
    std::vector<Charge> set;
    std::string item;
    for (std::size_t i = 0; i <= value.size(); ++i) {
      if (i == value.size() || value[i] == ',') {
        if (!detail::trim(item).empty()) {
          try {
            set.push_back(parse_category<Charge>(item));
          } catch (const Error&) {
            throw Error(Errc::BadConfig, key + ": unknown charge '" + item + "'");
          }
        }
        item.clear();
      } else {
        item += value[i];
      }
    }
    c.admissible(o) = set;
    return true;
  }
  return false;
}

inline std::vector<std::pair<std::string, std::string>> criteria_to_kv(const OrganCriteria& c) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (Organ o : kOrgans) {
    const std::string name(organ_name(o));
    const auto& b = c.band(o);
    kv.emplace_back("priors.size." + name + ".min", b.min ? detail::format_number(*b.min) : "");
    kv.emplace_back("priors.size." + name + ".max", b.max ? detail::format_number(*b.max) : "");
    std::string charges;
    for (Charge ch : c.admissible(o)) charges += (charges.empty() ? "" : ",") + std::string(label(ch));
    kv.emplace_back("priors.charge." + name, charges);
  }
  return kv;
}

}  // namespace nanopk
