#pragma once

// PENMAN-notation AMR graphs and the preprocessing that turns them into the
// flat token sequences the models consume: named-entity / date / quantity
// anonymization, depth-first linearization, and the inverse placeholder
// restoration applied to generated text.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace amrgen {

class PenmanError : public std::runtime_error {
 public:
  explicit PenmanError(const std::string& what) : std::runtime_error(what) {}
};

// Target of an edge: another variable, a bare constant (number, polarity
// "-", ...), or a quoted string literal (quotes stripped).
enum class AmrTarget { kVar, kConst, kLiteral };

struct AmrEdge {
  std::string source;  // variable name
  std::string role;    // as written in the source, e.g. ":ARG0"
  std::string target;  // variable name, constant token, or literal content
  AmrTarget kind = AmrTarget::kConst;
  int line = 0;  // position of the target token, for diagnostics
  int col = 0;
};

// Rooted acyclic AMR graph.  Edges keep the textual order of the source
// PENMAN expression; that order fixes the traversal used by print_penman,
// anonymize and linearize, so preprocessing is reproducible.
struct AmrGraph {
  std::string root;
  std::map<std::string, std::string> concepts;  // variable -> concept label
  std::vector<AmrEdge> edges;                   // textual order

  std::vector<int> out(const std::string& var) const;  // edge indices
  int in_degree(const std::string& var) const;         // var-target edges only
};

// Throws PenmanError (with line/column) on unbalanced parentheses, duplicate
// variable definitions, a missing concept after '/', or a cyclic graph.
AmrGraph parse_penman(const std::string& text);

// Deterministic normal form: each variable is expanded at its first visit of
// a depth-first walk in textual edge order; later mentions print the bare
// variable.  parse -> print -> parse -> print is a fixed point.
std::string print_penman(const AmrGraph& g);

struct AnonymizeResult {
  AmrGraph graph;
  std::map<std::string, std::string> table;  // placeholder -> surface string
};

// Collapses :name subgraphs into `<type>_<k>` placeholder concepts, replaces
// date-entity nodes by `date_<k>` and *-quantity :quant numbers by
// `quantity_<k>`.  Indices count per type in linearization order.  Graphs
// without entities pass through unchanged with an empty table.
AnonymizeResult anonymize(const AmrGraph& g);

struct LinearizedAmr {
  std::vector<std::string> tokens;
  std::map<std::string, std::string> anon_table;
};

// Depth-first flattening of an (anonymized) graph: variable names dropped,
// sense suffixes ("-01") stripped, everything lower-cased, parentheses only
// around non-root subtrees with at least one outgoing edge, re-entrant
// mentions emitted as the target's bare concept token.
LinearizedAmr linearize(const AmrGraph& g,
                        std::map<std::string, std::string> anon_table = {});

struct DeanonymizeResult {
  std::vector<std::string> tokens;
  int unknown_placeholders = 0;
};

// Replaces placeholder tokens by their stored surface strings (multi-word
// strings are spliced in as separate tokens).  Placeholder-shaped tokens
// missing from the table are left intact and counted.
DeanonymizeResult deanonymize(const std::vector<std::string>& tokens,
                              const std::map<std::string, std::string>& table);

bool is_anon_placeholder(const std::string& token);

// One block of a corpus file: PENMAN text plus optional `# ::id` / `# ::snt`
// metadata comments.  Blocks are separated by blank lines.
struct AmrEntry {
  std::string id;
  std::string sentence;  // raw ::snt text, whitespace-tokenized downstream
  std::string penman;
};

std::vector<AmrEntry> read_amr_blocks(const std::string& text);

}  // namespace amrgen
