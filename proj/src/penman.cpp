#include "amrgen/penman.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>

namespace amrgen {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string pos_str(int line, int col) {
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// ---------------------------------------------------------------------------
// lexer / parser

struct Token {
  enum Kind { kLParen, kRParen, kSlash, kRole, kLiteral, kAtom, kEnd } kind;
  std::string text;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && std::isspace((unsigned char)text_[pos_]))
      advance();
    Token t;
    t.line = line_;
    t.col = col_;
    if (pos_ >= text_.size()) {
      t.kind = Token::kEnd;
      return t;
    }
    char c = text_[pos_];
    if (c == '(' || c == ')' || c == '/') {
      advance();
      t.kind = c == '(' ? Token::kLParen
                        : (c == ')' ? Token::kRParen : Token::kSlash);
      t.text = c;
      return t;
    }
    if (c == '"') {
      advance();
      while (pos_ < text_.size() && text_[pos_] != '"') {
        t.text += text_[pos_];
        advance();
      }
      if (pos_ >= text_.size())
        throw PenmanError("unterminated string literal at " +
                          pos_str(t.line, t.col));
      advance();  // closing quote
      t.kind = Token::kLiteral;
      return t;
    }
    while (pos_ < text_.size()) {
      char a = text_[pos_];
      if (std::isspace((unsigned char)a) || a == '(' || a == ')' ||
          a == '/' || a == '"')
        break;
      t.text += a;
      advance();
    }
    t.kind = t.text[0] == ':' ? Token::kRole : Token::kAtom;
    return t;
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(const std::string& text) : lex_(text) { cur_ = lex_.next(); }

  AmrGraph parse() {
    if (cur_.kind != Token::kLParen)
      throw PenmanError("expected '(' at " + pos_str(cur_.line, cur_.col));
    g_.root = parse_node();
    if (cur_.kind != Token::kEnd)
      throw PenmanError("trailing input after graph at " +
                        pos_str(cur_.line, cur_.col));
    resolve_targets();
    check_acyclic();
    return std::move(g_);
  }

 private:
  Token eat() {
    Token t = cur_;
    cur_ = lex_.next();
    return t;
  }

  std::string parse_node() {
    eat();  // '('
    if (cur_.kind != Token::kAtom)
      throw PenmanError("expected variable name at " +
                        pos_str(cur_.line, cur_.col));
    Token var = eat();
    if (cur_.kind != Token::kSlash)
      throw PenmanError("expected '/' after variable '" + var.text + "' at " +
                        pos_str(cur_.line, cur_.col));
    eat();
    if (cur_.kind != Token::kAtom)
      throw PenmanError("missing concept after '/' at " +
                        pos_str(cur_.line, cur_.col));
    Token ctok = eat();
    if (g_.concepts.count(var.text))
      throw PenmanError("duplicate variable '" + var.text + "' at " +
                        pos_str(var.line, var.col));
    g_.concepts[var.text] = ctok.text;

    while (cur_.kind == Token::kRole) {
      Token role = eat();
      AmrEdge e;
      e.source = var.text;
      e.role = role.text;
      e.line = cur_.line;
      e.col = cur_.col;
      // Append before descending so edge order matches the text.
      size_t slot = g_.edges.size();
      g_.edges.push_back(e);
      if (cur_.kind == Token::kLParen) {
        g_.edges[slot].target = parse_node();
        g_.edges[slot].kind = AmrTarget::kVar;
      } else if (cur_.kind == Token::kLiteral) {
        g_.edges[slot].target = eat().text;
        g_.edges[slot].kind = AmrTarget::kLiteral;
      } else if (cur_.kind == Token::kAtom) {
        // Constant for now; re-classified as a variable reference once the
        // whole expression is parsed (references may precede definitions).
        g_.edges[slot].target = eat().text;
        g_.edges[slot].kind = AmrTarget::kConst;
      } else {
        throw PenmanError("expected a value after role '" + role.text +
                          "' at " + pos_str(cur_.line, cur_.col));
      }
    }

    if (cur_.kind == Token::kEnd)
      throw PenmanError("unbalanced parentheses: '(' at " +
                        pos_str(var.line, var.col) + " is never closed");
    if (cur_.kind != Token::kRParen)
      throw PenmanError("expected ')' at " + pos_str(cur_.line, cur_.col));
    eat();
    return var.text;
  }

  void resolve_targets() {
    for (AmrEdge& e : g_.edges)
      if (e.kind == AmrTarget::kConst && g_.concepts.count(e.target))
        e.kind = AmrTarget::kVar;
  }

  void check_acyclic() {
    std::map<std::string, int> color;  // 0 white, 1 on stack, 2 done
    std::function<void(const std::string&)> walk = [&](const std::string& v) {
      color[v] = 1;
      for (int i : g_.out(v)) {
        const AmrEdge& e = g_.edges[i];
        if (e.kind != AmrTarget::kVar) continue;
        int c = color.count(e.target) ? color[e.target] : 0;
        if (c == 1)
          throw PenmanError("cycle through variable '" + e.target + "' at " +
                            pos_str(e.line, e.col));
        if (c == 0) walk(e.target);
      }
      color[v] = 2;
    };
    walk(g_.root);
    for (const auto& [v, ignored] : g_.concepts)
      if (!color.count(v))
        throw PenmanError("variable '" + v + "' unreachable from root");
  }

  Lexer lex_;
  Token cur_;
  AmrGraph g_;
};

// Variables in first-visit depth-first order (the expansion order shared by
// print_penman, anonymize and linearize).
std::vector<std::string> dfs_order(const AmrGraph& g) {
  std::vector<std::string> order;
  std::set<std::string> seen;
  std::function<void(const std::string&)> walk = [&](const std::string& v) {
    seen.insert(v);
    order.push_back(v);
    for (int i : g.out(v)) {
      const AmrEdge& e = g.edges[i];
      if (e.kind == AmrTarget::kVar && !seen.count(e.target)) walk(e.target);
    }
  };
  walk(g.root);
  return order;
}

const std::set<std::string>& name_entity_types() {
  static const std::set<std::string> kTypes = {"person", "organization",
                                               "location", "country", "city"};
  return kTypes;
}

std::string render_date(int year, int month, int day) {
  static const char* kMonths[12] = {"January",   "February", "March",
                                    "April",     "May",      "June",
                                    "July",      "August",   "September",
                                    "October",   "November", "December"};
  std::string s;
  auto add = [&](const std::string& part) {
    if (!s.empty()) s += " ";
    s += part;
  };
  if (month >= 1 && month <= 12) add(kMonths[month - 1]);
  if (day > 0) add(std::to_string(day));
  if (year > 0) add(std::to_string(year));
  return s;
}

// "give-01" -> "give"; suffixes without digits ("date-entity") survive.
std::string concept_token(const std::string& label) {
  std::string c = label;
  size_t dash = c.find_last_of('-');
  if (dash != std::string::npos && dash > 0 && dash + 1 < c.size()) {
    bool digits = true;
    for (size_t i = dash + 1; i < c.size(); ++i)
      digits = digits && std::isdigit((unsigned char)c[i]);
    if (digits) c.erase(dash);
  }
  return lower(c);
}

}  // namespace

std::vector<int> AmrGraph::out(const std::string& var) const {
  std::vector<int> idx;
  for (int i = 0; i < (int)edges.size(); ++i)
    if (edges[i].source == var) idx.push_back(i);
  return idx;
}

int AmrGraph::in_degree(const std::string& var) const {
  int n = 0;
  for (const AmrEdge& e : edges)
    n += e.kind == AmrTarget::kVar && e.target == var;
  return n;
}

AmrGraph parse_penman(const std::string& text) {
  return Parser(text).parse();
}

std::string print_penman(const AmrGraph& g) {
  std::set<std::string> visited;
  std::string out;
  std::function<void(const std::string&)> walk = [&](const std::string& var) {
    visited.insert(var);
    out += "(" + var + " / " + g.concepts.at(var);
    for (int i : g.out(var)) {
      const AmrEdge& e = g.edges[i];
      out += " " + e.role + " ";
      if (e.kind == AmrTarget::kVar) {
        if (visited.count(e.target))
          out += e.target;
        else
          walk(e.target);
      } else if (e.kind == AmrTarget::kLiteral) {
        out += "\"" + e.target + "\"";
      } else {
        out += e.target;
      }
    }
    out += ")";
  };
  walk(g.root);
  return out;
}

AnonymizeResult anonymize(const AmrGraph& g) {
  AnonymizeResult res;
  res.graph = g;
  std::map<std::string, int> counters;
  std::set<std::string> drop_vars;
  std::set<int> drop_edges;

  auto next_placeholder = [&](const std::string& type) {
    return type + "_" + std::to_string(counters[type]++);
  };

  for (const std::string& var : dfs_order(g)) {
    const std::string& label = g.concepts.at(var);

    // Named entity: a :name edge to a `name` node carrying :opN strings.
    int name_edge = -1;
    for (int i : g.out(var)) {
      const AmrEdge& e = g.edges[i];
      if (lower(e.role) == ":name" && e.kind == AmrTarget::kVar &&
          g.concepts.at(e.target) == "name") {
        name_edge = i;
        break;
      }
    }
    if (name_edge >= 0) {
      const std::string& name_var = g.edges[name_edge].target;
      std::vector<std::pair<int, std::string>> ops;
      for (int i : g.out(name_var)) {
        const AmrEdge& e = g.edges[i];
        std::string role = lower(e.role);
        if (role.rfind(":op", 0) == 0 && e.kind != AmrTarget::kVar)
          ops.emplace_back(std::atoi(role.c_str() + 3), e.target);
      }
      std::sort(ops.begin(), ops.end());
      std::string surface;
      for (const auto& [n, word] : ops) {
        if (!surface.empty()) surface += " ";
        surface += word;
      }
      std::string type = name_entity_types().count(label) ? label : "other";
      std::string ph = next_placeholder(type);
      res.graph.concepts[var] = ph;
      res.table[ph] = surface;
      drop_edges.insert(name_edge);
      for (int i : g.out(name_var)) drop_edges.insert(i);
      drop_vars.insert(name_var);
      for (int i : g.out(var))  // :wiki carries no surface material
        if (lower(g.edges[i].role) == ":wiki") drop_edges.insert(i);
      continue;
    }

    if (label == "date-entity") {
      int year = 0, month = 0, day = 0;
      for (int i : g.out(var)) {
        const AmrEdge& e = g.edges[i];
        if (e.kind == AmrTarget::kVar) continue;
        std::string role = lower(e.role);
        if (role == ":year") year = std::atoi(e.target.c_str());
        if (role == ":month") month = std::atoi(e.target.c_str());
        if (role == ":day") day = std::atoi(e.target.c_str());
        drop_edges.insert(i);  // all literal parts fold into the placeholder
      }
      std::string ph = next_placeholder("date");
      res.graph.concepts[var] = ph;
      res.table[ph] = render_date(year, month, day);
      continue;
    }

    if (label.size() > 9 && label.ends_with("-quantity")) {
      for (int i : g.out(var)) {
        AmrEdge& e = res.graph.edges[i];
        if (lower(e.role) == ":quant" && e.kind == AmrTarget::kConst) {
          std::string ph = next_placeholder("quantity");
          res.table[ph] = e.target;
          e.target = ph;
          break;
        }
      }
    }
  }

  if (!drop_edges.empty() || !drop_vars.empty()) {
    std::vector<AmrEdge> kept;
    for (int i = 0; i < (int)res.graph.edges.size(); ++i)
      if (!drop_edges.count(i)) kept.push_back(res.graph.edges[i]);
    res.graph.edges = std::move(kept);
    for (const std::string& v : drop_vars) res.graph.concepts.erase(v);
  }
  return res;
}

LinearizedAmr linearize(const AmrGraph& g,
                        std::map<std::string, std::string> anon_table) {
  LinearizedAmr lin;
  lin.anon_table = std::move(anon_table);
  std::set<std::string> visited;
  std::function<void(const std::string&, bool)> walk =
      [&](const std::string& var, bool root) {
        visited.insert(var);
        std::vector<int> out = g.out(var);
        bool bracket = !root && !out.empty();
        if (bracket) lin.tokens.push_back("(");
        lin.tokens.push_back(concept_token(g.concepts.at(var)));
        for (int i : out) {
          const AmrEdge& e = g.edges[i];
          lin.tokens.push_back(lower(e.role));
          if (e.kind == AmrTarget::kVar) {
            if (visited.count(e.target))
              lin.tokens.push_back(concept_token(g.concepts.at(e.target)));
            else
              walk(e.target, false);
          } else {
            lin.tokens.push_back(lower(e.target));
          }
        }
        if (bracket) lin.tokens.push_back(")");
      };
  walk(g.root, true);
  return lin;
}

DeanonymizeResult deanonymize(const std::vector<std::string>& tokens,
                              const std::map<std::string, std::string>& table) {
  DeanonymizeResult res;
  for (const std::string& tok : tokens) {
    auto it = table.find(tok);
    if (it != table.end()) {
      std::istringstream words(it->second);
      std::string w;
      while (words >> w) res.tokens.push_back(w);
      continue;
    }
    if (is_anon_placeholder(tok)) ++res.unknown_placeholders;
    res.tokens.push_back(tok);
  }
  return res;
}

bool is_anon_placeholder(const std::string& token) {
  static const std::set<std::string> kTypes = {
      "person", "organization", "location", "country",
      "city",   "date",         "quantity", "other"};
  size_t us = token.find_last_of('_');
  if (us == std::string::npos || us + 1 >= token.size()) return false;
  for (size_t i = us + 1; i < token.size(); ++i)
    if (!std::isdigit((unsigned char)token[i])) return false;
  return kTypes.count(token.substr(0, us)) > 0;
}

std::vector<AmrEntry> read_amr_blocks(const std::string& text) {
  std::vector<AmrEntry> entries;
  AmrEntry cur;
  auto flush = [&] {
    if (!trim(cur.penman).empty()) entries.push_back(cur);
    cur = AmrEntry{};
  };
  // Extracts the value of a `::key` comment field: the rest of the line for
  // ::snt, the first whitespace token for ::id.
  auto field = [](const std::string& line, const std::string& key,
                  bool rest) -> std::string {
    size_t p = line.find("::" + key);
    if (p == std::string::npos) return "";
    p += key.size() + 2;
    if (p < line.size() && !std::isspace((unsigned char)line[p])) return "";
    while (p < line.size() && std::isspace((unsigned char)line[p])) ++p;
    if (rest) return trim(line.substr(p));
    size_t e = p;
    while (e < line.size() && !std::isspace((unsigned char)line[e])) ++e;
    return line.substr(p, e - p);
  };

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty()) {
      flush();
      continue;
    }
    if (t[0] == '#') {
      std::string id = field(t, "id", /*rest=*/false);
      if (!id.empty()) cur.id = id;
      std::string snt = field(t, "snt", /*rest=*/true);
      if (!snt.empty()) cur.sentence = snt;
      continue;
    }
    if (!cur.penman.empty()) cur.penman += "\n";
    cur.penman += line;
  }
  flush();
  return entries;
}

}  // namespace amrgen
