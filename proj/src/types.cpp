#include "codiff/types.hpp"

namespace codiff {

Box::Box(Vec lower, Vec upper) : lo(std::move(lower)), hi(std::move(upper)) {
  require(lo.size() == hi.size(), "Box: bound dimensions differ");
  require((lo.array() <= hi.array()).all(), "Box: lower bound exceeds upper bound");
}

bool Box::contains(const Vec& x) const {
  return x.size() == lo.size() && (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

Vec Box::project(const Vec& x) const {
  require(x.size() == lo.size(), "Box::project: dimension mismatch");
  return x.cwiseMax(lo).cwiseMin(hi);
}

Design::Design(Vec value, std::optional<Box> box) : xi(std::move(value)), bounds(std::move(box)) {
  require(all_finite(xi), "Design: non-finite entry");
  if (bounds) {
    require(bounds->dim() == xi.size(), "Design: bounds dimension mismatch");
    require(bounds->contains(xi), "Design: value outside bounds");
  }
}

History::History(std::vector<Experiment> entries) : entries_(std::move(entries)) {}

void History::append(Vec xi, Vec y) {
  require(all_finite(xi) && all_finite(y), "History::append: non-finite experiment");
  entries_.push_back({std::move(xi), std::move(y)});
}

History History::prefix(std::size_t k) const {
  require(k <= entries_.size(), "History::prefix: k exceeds history length");
  return History(std::vector<Experiment>(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(k)));
}

}  // namespace codiff
