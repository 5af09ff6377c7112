#include "nepner/merge.hpp"

#include "nepner/error.hpp"

namespace nepner {

PriorityOrder::PriorityOrder() : PriorityOrder(std::vector<EntityType>(kAllEntityTypes.begin(), kAllEntityTypes.end())) {}

PriorityOrder::PriorityOrder(const std::vector<EntityType>& order) {
  if (order.size() != kNumEntityTypes) {
    throw config_error("priority order must list all five entity types");
  }
  std::array<bool, kNumEntityTypes> seen{};
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto idx = index_of(order[i]);
    if (seen[idx]) throw config_error("priority order repeats " + std::string(long_name(order[i])));
    seen[idx] = true;
    order_[i] = order[i];
    rank_[idx] = i;
  }
}

PriorityOrder PriorityOrder::parse(const std::vector<std::string>& names) {
  std::vector<EntityType> order;
  for (const auto& n : names) {
    auto t = parse_entity_type(n);
    if (!t) throw config_error("unknown entity type '" + n + "' in priority order");
    order.push_back(*t);
  }
  return PriorityOrder(order);
}

BioSequence repair_bio(BioSequence bio) {
  for (std::size_t i = 0; i < bio.size(); ++i) {
    if (bio[i].kind != BioTag::Kind::kInside) continue;
    bool continues = i > 0 && !bio[i - 1].is_outside() && bio[i - 1].type == bio[i].type;
    if (!continues) bio[i].kind = BioTag::Kind::kBegin;
  }
  return bio;
}

bool is_well_formed(const BioSequence& bio) {
  for (std::size_t i = 0; i < bio.size(); ++i) {
    if (bio[i].kind != BioTag::Kind::kInside) continue;
    if (i == 0 || bio[i - 1].is_outside() || bio[i - 1].type != bio[i].type) return false;
  }
  return true;
}

BioSequence merge_bio(const std::map<EntityType, BioSequence>& per_type,
                      const PriorityOrder& order, bool repair) {
  if (per_type.empty()) return {};
  const auto length = per_type.begin()->second.size();
  for (const auto& [type, seq] : per_type) {
    if (seq.size() != length) {
      throw invalid_argument("merge_bio: sequence for " + std::string(long_name(type)) + " has " +
                             std::to_string(seq.size()) + " tags, expected " + std::to_string(length));
    }
    for (const auto& tag : seq) {
      if (!tag.is_outside() && tag.type != type) {
        throw invalid_argument("merge_bio: " + std::string(long_name(type)) +
                               " sequence contains tag " + to_string(tag));
      }
    }
  }

  BioSequence merged(length);
  for (std::size_t i = 0; i < length; ++i) {
    for (auto type : order.types()) {
      auto it = per_type.find(type);
      if (it == per_type.end()) continue;
      if (!it->second[i].is_outside()) {
        merged[i] = it->second[i];
        break;
      }
    }
  }
  return repair ? repair_bio(std::move(merged)) : merged;
}

}  // namespace nepner
