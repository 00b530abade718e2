#include "qops/vocab.hpp"

#include <stdexcept>
#include <unordered_set>

namespace qops {

Vocab::Vocab() {
  for (const char* s : {kPadSymbol, kSosSymbol, kEosSymbol, kUnkSymbol}) {
    ids_.emplace(s, static_cast<int>(symbols_.size()));
    symbols_.emplace_back(s);
  }
}

int Vocab::add(const std::string& symbol) {
  auto it = ids_.find(symbol);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(symbols_.size());
  ids_.emplace(symbol, id);
  symbols_.push_back(symbol);
  return id;
}

int Vocab::id_of(const std::string& symbol) const {
  auto it = ids_.find(symbol);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocab::contains(const std::string& symbol) const { return ids_.count(symbol) > 0; }

const std::string& Vocab::symbol_of(int id) const {
  if (id < 0 || id >= static_cast<int>(symbols_.size())) {
    throw std::out_of_range("vocab id " + std::to_string(id) + " out of range (size " +
                            std::to_string(symbols_.size()) + ")");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

Vocab Vocab::from_symbols(const std::vector<std::string>& symbols) {
  Vocab v;
  if (symbols.size() < 4 || symbols[0] != kPadSymbol || symbols[1] != kSosSymbol ||
      symbols[2] != kEosSymbol || symbols[3] != kUnkSymbol) {
    throw std::invalid_argument("vocab symbol list must start with the four reserved symbols");
  }
  for (std::size_t i = 4; i < symbols.size(); ++i) {
    if (v.contains(symbols[i])) {
      throw std::invalid_argument("duplicate vocab symbol: " + symbols[i]);
    }
    v.add(symbols[i]);
  }
  return v;
}

const OperatorSet& OperatorSet::qdmr() {
  static const OperatorSet set({"select", "filter", "project", "aggregate", "group",
                                "superlative", "comparative", "union", "intersection", "discard",
                                "sort", "boolean", "arithmetic"});
  return set;
}

OperatorSet::OperatorSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw std::invalid_argument("operator set must be non-empty");
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) {
      throw std::invalid_argument("duplicate operator name: " + n);
    }
    if (n == kPadSymbol || n == kSosSymbol || n == kEosSymbol || n == kUnkSymbol) {
      throw std::invalid_argument("operator name collides with reserved symbol: " + n);
    }
  }
}

bool OperatorSet::contains(const std::string& name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

Vocab OperatorSet::vocab() const {
  Vocab v;
  for (const auto& n : names_) v.add(n);
  return v;
}

}  // namespace qops
