#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace qops {

// Reserved ids shared by every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr std::size_t kNumReserved = 4;

inline constexpr const char* kPadSymbol = "<pad>";
inline constexpr const char* kSosSymbol = "<sos>";
inline constexpr const char* kEosSymbol = "<eos>";
inline constexpr const char* kUnkSymbol = "<unk>";

// Bijective symbol<->id map with the four reserved symbols always first.
class Vocab {
 public:
  Vocab();

  // Appends a symbol if absent; returns its id either way.
  int add(const std::string& symbol);

  // Id lookup; unknown symbols map to kUnkId.
  int id_of(const std::string& symbol) const;
  bool contains(const std::string& symbol) const;
  const std::string& symbol_of(int id) const;

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  static Vocab from_symbols(const std::vector<std::string>& symbols);

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> ids_;
};

// The QDMR semantic-operator inventory: thirteen canonical lowercase names.
// The list is configurable but may not contain duplicates or reserved names.
class OperatorSet {
 public:
  static const OperatorSet& qdmr();
  explicit OperatorSet(std::vector<std::string> names);

  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  // Fixed ops-side vocabulary: reserved symbols then the operator names, in
  // inventory order regardless of corpus order.
  Vocab vocab() const;

 private:
  std::vector<std::string> names_;
};

}  // namespace qops
