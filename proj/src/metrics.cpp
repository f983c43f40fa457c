#include "amrgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace amrgen {

namespace {

// n-gram counts keyed by the joined tokens ('\x1f' never appears in tokens)
std::map<std::string, int> ngram_counts(const TokenSeq& toks, int n) {
  std::map<std::string, int> counts;
  for (int i = 0; i + n <= (int)toks.size(); ++i) {
    std::string key = toks[i];
    for (int j = 1; j < n; ++j) key += '\x1f' + toks[i + j];
    ++counts[key];
  }
  return counts;
}

int span_walk(const ConstituencyTree& t, int start, bool include_width1,
              std::vector<Span>& out) {
  if (t.leaf()) return start + 1;
  int end = start;
  for (const ConstituencyTree& c : t.children)
    end = span_walk(c, end, include_width1, out);
  if (include_width1 || end - start >= 2) out.push_back({start, end, t.label});
  return end;
}

// Maps a predicted span into reference coordinates; valid only when the
// alignment restricted to the span is a bijection onto the target interval.
bool project_span(const Span& s, const Alignment& al, Span& out) {
  for (int i = s.start; i < s.end; ++i)
    if (al.pred_to_ref[i] < 0) return false;
  int a = al.pred_to_ref[s.start];
  int b = al.pred_to_ref[s.end - 1] + 1;
  for (int j = a; j < b; ++j) {
    int back = al.ref_to_pred[j];
    if (back < s.start || back >= s.end) return false;
  }
  out = {a, b, s.label};
  return true;
}

}  // namespace

double corpus_bleu(const std::vector<TokenSeq>& hypotheses,
                   const std::vector<TokenSeq>& references) {
  if (hypotheses.size() != references.size())
    throw MetricsError("corpus_bleu: " + std::to_string(hypotheses.size()) +
                       " hypotheses vs " + std::to_string(references.size()) +
                       " references");
  long long hyp_len = 0, ref_len = 0;
  long long match[4] = {0, 0, 0, 0};
  long long total[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    const TokenSeq& hyp = hypotheses[i];
    const TokenSeq& ref = references[i];
    hyp_len += (long long)hyp.size();
    ref_len += (long long)ref.size();
    for (int n = 1; n <= 4; ++n) {
      if ((int)hyp.size() < n) break;
      std::map<std::string, int> h = ngram_counts(hyp, n);
      std::map<std::string, int> r = ngram_counts(ref, n);
      for (const auto& [gram, count] : h) {
        auto it = r.find(gram);
        if (it != r.end()) match[n - 1] += std::min(count, it->second);
      }
      total[n - 1] += (long long)hyp.size() - n + 1;
    }
  }
  if (hyp_len == 0) return 0.0;
  double log_p = 0.0;
  int used = 0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0) continue;  // corpus has no n-grams of this order
    if (match[n] == 0) return 0.0;
    log_p += std::log((double)match[n] / (double)total[n]);
    ++used;
  }
  if (used == 0) return 0.0;
  double bp =
      hyp_len < ref_len ? std::exp(1.0 - (double)ref_len / hyp_len) : 1.0;
  return 100.0 * bp * std::exp(log_p / used);
}

Alignment align_terminals(const TokenSeq& pred, const TokenSeq& ref) {
  int n = (int)pred.size(), m = (int)ref.size();
  // lcs[i][j] = LCS length of pred[i:] and ref[j:]
  std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
  for (int i = n - 1; i >= 0; --i)
    for (int j = m - 1; j >= 0; --j)
      lcs[i][j] = pred[i] == ref[j]
                      ? lcs[i + 1][j + 1] + 1
                      : std::max(lcs[i + 1][j], lcs[i][j + 1]);
  Alignment al;
  al.pred_to_ref.assign(n, -1);
  al.ref_to_pred.assign(m, -1);
  int i = 0, j = 0;
  while (i < n && j < m) {
    if (pred[i] == ref[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
      al.matches.emplace_back(i, j);  // earliest match wherever optimal
      al.pred_to_ref[i] = j;
      al.ref_to_pred[j] = i;
      ++i;
      ++j;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      ++i;
    } else {
      ++j;
    }
  }
  al.edits = n + m - 2 * (int)al.matches.size();
  return al;
}

std::vector<Span> tree_spans(const ConstituencyTree& t, bool include_width1) {
  std::vector<Span> out;
  span_walk(t, 0, include_width1, out);
  return out;
}

TokenSeq tree_terminals(const ConstituencyTree& t) {
  TokenSeq out;
  std::vector<const ConstituencyTree*> stack = {&t};
  while (!stack.empty()) {
    const ConstituencyTree* cur = stack.back();
    stack.pop_back();
    if (cur->leaf()) {
      out.push_back(cur->label);
      continue;
    }
    for (auto it = cur->children.rbegin(); it != cur->children.rend(); ++it)
      stack.push_back(&*it);
  }
  return out;
}

SpanMatchCounts span_match_counts(const ConstituencyTree& pred,
                                  const ConstituencyTree& ref, bool labelled,
                                  bool include_width1) {
  std::vector<Span> pred_spans = tree_spans(pred, include_width1);
  std::vector<Span> ref_spans = tree_spans(ref, include_width1);
  Alignment al = align_terminals(tree_terminals(pred), tree_terminals(ref));

  std::map<std::tuple<int, int, std::string>, int> projected;
  for (const Span& s : pred_spans) {
    Span p;
    if (project_span(s, al, p))
      ++projected[{p.start, p.end, labelled ? p.label : std::string()}];
  }
  SpanMatchCounts counts;
  counts.n_pred = (long long)pred_spans.size();
  counts.n_ref = (long long)ref_spans.size();
  for (const Span& s : ref_spans) {
    auto it = projected.find(
        {s.start, s.end, labelled ? s.label : std::string()});
    if (it != projected.end() && it->second > 0) {
      --it->second;
      ++counts.matched;
    }
  }
  return counts;
}

namespace {

PrfScore prf_from_counts(long long matched, long long n_pred, long long n_ref) {
  PrfScore s;
  s.precision = n_pred ? (double)matched / n_pred : (n_ref == 0 ? 1.0 : 0.0);
  s.recall = n_ref ? (double)matched / n_ref : (n_pred == 0 ? 1.0 : 0.0);
  s.f1 = s.precision + s.recall > 0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace

PrfScore span_f1(const ConstituencyTree& pred, const ConstituencyTree& ref,
                 bool labelled, bool include_width1) {
  SpanMatchCounts c = span_match_counts(pred, ref, labelled, include_width1);
  return prf_from_counts(c.matched, c.n_pred, c.n_ref);
}

ParseEvalReport evaluate_parse_task(
    const std::vector<std::pair<std::string, ConstituencyTree>>& pred,
    const std::vector<std::pair<std::string, ConstituencyTree>>& ref) {
  if (pred.size() != ref.size())
    throw MetricsError("evaluate_parse_task: " + std::to_string(pred.size()) +
                       " predictions vs " + std::to_string(ref.size()) +
                       " references");
  SpanMatchCounts lab, unlab;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].first != ref[i].first)
      throw MetricsError("id mismatch at position " + std::to_string(i) +
                         ": '" + pred[i].first + "' vs '" + ref[i].first +
                         "'");
    SpanMatchCounts l =
        span_match_counts(pred[i].second, ref[i].second, /*labelled=*/true);
    SpanMatchCounts u =
        span_match_counts(pred[i].second, ref[i].second, /*labelled=*/false);
    lab.matched += l.matched;
    lab.n_pred += l.n_pred;
    lab.n_ref += l.n_ref;
    unlab.matched += u.matched;
    unlab.n_pred += u.n_pred;
    unlab.n_ref += u.n_ref;
  }
  PrfScore l = prf_from_counts(lab.matched, lab.n_pred, lab.n_ref);
  PrfScore u = prf_from_counts(unlab.matched, unlab.n_pred, unlab.n_ref);
  ParseEvalReport r;
  r.labelled_precision = 100.0 * l.precision;
  r.labelled_recall = 100.0 * l.recall;
  r.labelled_f1 = 100.0 * l.f1;
  r.unlabelled_precision = 100.0 * u.precision;
  r.unlabelled_recall = 100.0 * u.recall;
  r.unlabelled_f1 = 100.0 * u.f1;
  r.n_examples = (int)pred.size();
  return r;
}

}  // namespace amrgen
