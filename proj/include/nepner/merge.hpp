#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "nepner/corpus.hpp"

namespace nepner {

// Highest priority first; always a permutation of the five types.
class PriorityOrder {
 public:
  PriorityOrder();  // LOCATION, ORGANIZATION, PERSON, DATE, EVENT
  // Throws Error(kConfig) unless `order` names every type exactly once.
  explicit PriorityOrder(const std::vector<EntityType>& order);
  static PriorityOrder parse(const std::vector<std::string>& names);

  const std::array<EntityType, kNumEntityTypes>& types() const { return order_; }
  // 0 = highest.
  std::size_t rank(EntityType t) const { return rank_[index_of(t)]; }

 private:
  std::array<EntityType, kNumEntityTypes> order_;
  std::array<std::size_t, kNumEntityTypes> rank_;
};

// Every I(t) not preceded by B(t)/I(t) becomes B(t); nothing else changes.
BioSequence repair_bio(BioSequence bio);

bool is_well_formed(const BioSequence& bio);

// Token-wise: the non-O tag of the highest-priority type wins. Throws
// Error(kInvalid) on length mismatch or a sequence tagged with a type other
// than its key.
BioSequence merge_bio(const std::map<EntityType, BioSequence>& per_type,
                      const PriorityOrder& order = PriorityOrder(), bool repair = true);

}  // namespace nepner
