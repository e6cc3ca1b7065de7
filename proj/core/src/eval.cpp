#include "ctxnmt/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>

namespace ctxnmt {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

TokenSentence maybe_lower(const TokenSentence& s, bool lowercase) {
  if (!lowercase) return s;
  TokenSentence out;
  out.reserve(s.size());
  for (const auto& tok : s) out.push_back(lower(tok));
  return out;
}

// n-grams keyed by their tokens joined with an unlikely separator byte.
std::map<std::string, std::size_t> ngram_counts(const TokenSentence& s, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += s[i + j];
    }
    ++counts[key];
  }
  return counts;
}

// Numerator (clipped matches) and denominator (hypothesis n-gram count) of
// the modified n-gram precision for one sentence.
std::pair<std::size_t, std::size_t> clipped_matches(const TokenSentence& hyp,
                                                    const std::vector<TokenSentence>& refs,
                                                    std::size_t n) {
  const auto hyp_counts = ngram_counts(hyp, n);
  std::map<std::string, std::size_t> ref_max;
  for (const auto& ref : refs) {
    for (const auto& [key, count] : ngram_counts(ref, n)) {
      auto& slot = ref_max[key];
      slot = std::max(slot, count);
    }
  }
  std::size_t num = 0;
  std::size_t den = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  for (const auto& [key, count] : hyp_counts) {
    auto it = ref_max.find(key);
    if (it != ref_max.end()) num += std::min(count, it->second);
  }
  return {num, den};
}

// Reference length closest to the hypothesis length; ties pick the shorter.
std::size_t closest_ref_length(std::size_t hyp_len, const std::vector<TokenSentence>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& ref : refs) {
    const std::size_t len = ref.size();
    const auto dist = [&](std::size_t l) {
      return l > hyp_len ? l - hyp_len : hyp_len - l;
    };
    if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best)) best = len;
  }
  return best;
}

double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
  if (hyp_len == 0) return 0.0;
  if (hyp_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

}  // namespace

BleuResult corpus_bleu(const std::vector<TokenSentence>& hyps,
                       const std::vector<std::vector<TokenSentence>>& refs, bool lowercase) {
  if (hyps.size() != refs.size()) {
    throw ContractError("corpus BLEU needs one reference set per hypothesis, got " +
                        std::to_string(hyps.size()) + " hypotheses and " +
                        std::to_string(refs.size()) + " reference sets");
  }
  std::array<std::size_t, 4> num{};
  std::array<std::size_t, 4> den{};
  BleuResult r;

  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) {
      throw ContractError("sentence " + std::to_string(i + 1) + " has an empty reference set");
    }
    const TokenSentence hyp = maybe_lower(hyps[i], lowercase);
    std::vector<TokenSentence> ref_set;
    ref_set.reserve(refs[i].size());
    for (const auto& ref : refs[i]) ref_set.push_back(maybe_lower(ref, lowercase));

    r.hyp_length += hyp.size();
    r.ref_length += closest_ref_length(hyp.size(), ref_set);
    for (std::size_t n = 0; n < 4; ++n) {
      const auto [mn, md] = clipped_matches(hyp, ref_set, n + 1);
      num[n] += mn;
      den[n] += md;
    }
  }

  r.brevity_penalty = brevity_penalty(r.hyp_length, r.ref_length);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] =
        den[n] == 0 ? 0.0 : static_cast<double>(num[n]) / static_cast<double>(den[n]);
    if (r.precisions[n] <= 0.0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  r.bleu = zero ? 0.0 : r.brevity_penalty * std::exp(0.25 * log_sum);
  return r;
}

double sentence_bleu_smoothed(const TokenSentence& hyp, const std::vector<TokenSentence>& refs,
                              bool lowercase) {
  if (hyp.empty()) throw ContractError("sentence BLEU needs a non-empty hypothesis");
  if (refs.empty()) throw ContractError("sentence BLEU needs at least one reference");
  const TokenSentence h = maybe_lower(hyp, lowercase);
  std::vector<TokenSentence> ref_set;
  ref_set.reserve(refs.size());
  for (const auto& ref : refs) ref_set.push_back(maybe_lower(ref, lowercase));

  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const auto [num, den] = clipped_matches(h, ref_set, n + 1);
    log_sum += std::log((static_cast<double>(num) + 1.0) / (static_cast<double>(den) + 1.0));
  }
  const double bp = brevity_penalty(h.size(), closest_ref_length(h.size(), ref_set));
  return bp * std::exp(0.25 * log_sum);
}

SignTestResult sign_test(const std::vector<double>& scores_a,
                         const std::vector<double>& scores_b) {
  if (scores_a.size() != scores_b.size()) {
    throw ContractError("sign test needs paired scores, got " +
                        std::to_string(scores_a.size()) + " and " +
                        std::to_string(scores_b.size()));
  }
  if (scores_a.empty()) throw ContractError("sign test needs at least one pair");

  SignTestResult r;
  for (std::size_t i = 0; i < scores_a.size(); ++i) {
    if (scores_a[i] > scores_b[i]) {
      ++r.wins;
    } else if (scores_a[i] < scores_b[i]) {
      ++r.losses;
    } else {
      ++r.ties;
    }
  }
  const std::size_t n = r.wins + r.losses;
  if (n == 0) {
    r.p_value = 1.0;
    return r;
  }

  // Two-sided exact binomial tail: 2 * P[X >= max(wins, losses)] for X ~
  // Binomial(n, 1/2), capped at 1. The coefficients are integers that fit
  // the 64-bit long double mantissa exactly up to n ~ 60; past that they
  // round at ~1e-19 relative error, far below any threshold compared here.
  const std::size_t k = std::max(r.wins, r.losses);
  long double coeff = 1.0L;  // C(n, 0)
  for (std::size_t i = 1; i <= k; ++i) {
    coeff = coeff * static_cast<long double>(n - i + 1) / static_cast<long double>(i);
  }
  long double tail = 0.0L;
  for (std::size_t i = k; i <= n; ++i) {
    tail += coeff;
    coeff = coeff * static_cast<long double>(n - i) / static_cast<long double>(i + 1);
  }
  const long double p = 2.0L * std::ldexp(tail, -static_cast<int>(n));
  r.p_value = static_cast<double>(p > 1.0L ? 1.0L : p);
  return r;
}

std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", p);
  std::string s(buf);
  std::size_t end = s.size();
  while (end > 0 && s[end - 1] == '0') --end;
  if (end > 0 && s[end - 1] == '.') ++end;  // keep one digit after the point
  return s.substr(0, end);
}

std::string format_bleu_report(const BleuResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "bleu: %.2f\np1: %.2f\np2: %.2f\np3: %.2f\np4: %.2f\nbp: %.4f\n",
                100.0 * r.bleu, 100.0 * r.precisions[0], 100.0 * r.precisions[1],
                100.0 * r.precisions[2], 100.0 * r.precisions[3], r.brevity_penalty);
  return buf;
}

std::string format_sign_report(const SignTestResult& r) {
  std::string out;
  out += "wins: " + std::to_string(r.wins) + "\n";
  out += "losses: " + std::to_string(r.losses) + "\n";
  out += "ties: " + std::to_string(r.ties) + "\n";
  out += "p_value: " + format_probability(r.p_value) + "\n";
  return out;
}

std::string format_gate_report(const GateReport& r) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "steps: %zu\ncomponents: %zu\n", r.steps, r.components);
  out += buf;
  std::snprintf(buf, sizeof buf, "mean: %.6f\nmin: %.6f\nmax: %.6f\n", r.mean, r.min, r.max);
  out += buf;
  for (std::size_t b = 0; b < r.histogram.size(); ++b) {
    std::snprintf(buf, sizeof buf, "bin_%zu: %zu\n", b, r.histogram[b]);
    out += buf;
  }
  return out;
}

}  // namespace ctxnmt
