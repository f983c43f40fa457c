#pragma once

// Token/index maps.  Every vocabulary reserves the same four leading rows;
// indices above them are assigned by (count descending, token ascending) so
// rebuilding from the same corpus is reproducible.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace amrgen {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr const char* kPadTok = "<pad>";
inline constexpr const char* kUnkTok = "<unk>";
inline constexpr const char* kBosTok = "<bos>";
inline constexpr const char* kEosTok = "<eos>";

class VocabError : public std::runtime_error {
 public:
  explicit VocabError(const std::string& what) : std::runtime_error(what) {}
};

struct Vocab {
  std::vector<std::string> tokens{kPadTok, kUnkTok, kBosTok, kEosTok};
  std::map<std::string, int> index{{kPadTok, kPadId},
                                   {kUnkTok, kUnkId},
                                   {kBosTok, kBosId},
                                   {kEosTok, kEosId}};
  std::map<std::string, long long> counts;  // training-corpus counts

  int size() const { return (int)tokens.size(); }
  bool contains(const std::string& t) const { return index.count(t) > 0; }

  int add(const std::string& t) {
    auto it = index.find(t);
    if (it != index.end()) return it->second;
    tokens.push_back(t);
    index[t] = (int)tokens.size() - 1;
    return (int)tokens.size() - 1;
  }

  int get(const std::string& t) const {
    auto it = index.find(t);
    return it == index.end() ? kUnkId : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size())
      throw VocabError("token id " + std::to_string(id) +
                       " out of range (size " + std::to_string(size()) + ")");
    return tokens[std::size_t(id)];
  }

  long long count(const std::string& t) const {
    auto it = counts.find(t);
    return it == counts.end() ? 0 : it->second;
  }
};

Vocab vocab_from_counts(const std::map<std::string, long long>& counts);

struct VocabSet {
  Vocab amr;     // linearized AMR tokens: concepts, roles, brackets
  Vocab action;  // parse actions: "(S", "NN", ")"
  Vocab word;    // surface words
  Vocab pos;     // POS tags (terminal labels)
};

}  // namespace amrgen
