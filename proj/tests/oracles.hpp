#pragma once

// Brute-force reference implementations. They share no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgmt/metrics.hpp"
#include "sgmt/model.hpp"
#include "sgmt/rng.hpp"

namespace oracle {

using Sentence = std::vector<std::string>;

inline std::string join_span(const Sentence& s, std::size_t start, int n) {
    std::string out;
    for (int k = 0; k < n; ++k) {
        if (k) out += '\x1f';
        out += s[start + static_cast<std::size_t>(k)];
    }
    return out;
}

inline std::vector<std::string> windows(const Sentence& s, int n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i) out.push_back(join_span(s, i, n));
    return out;
}

inline int occurrences(const std::vector<std::string>& grams, const std::string& g) {
    return static_cast<int>(std::count(grams.begin(), grams.end(), g));
}

inline double bleu4(const sgmt::EvalCorpus& corpus, bool smoothing = false) {
    double num[4] = {0, 0, 0, 0};
    double den[4] = {0, 0, 0, 0};
    double c = 0;
    double r = 0;
    for (const auto& item : corpus.items) {
        const double lc = static_cast<double>(item.candidate.size());
        c += lc;
        std::vector<double> lens;
        for (const auto& ref : item.references) lens.push_back(static_cast<double>(ref.size()));
        std::sort(lens.begin(), lens.end(), [lc](double a, double b) {
            const double da = std::fabs(a - lc);
            const double db = std::fabs(b - lc);
            return da != db ? da < db : a < b;
        });
        r += lens.front();
        for (int n = 1; n <= 4; ++n) {
            const auto cand = windows(item.candidate, n);
            den[n - 1] += static_cast<double>(cand.size());
            std::set<std::string> distinct(cand.begin(), cand.end());
            for (const auto& g : distinct) {
                int best = 0;
                for (const auto& ref : item.references) best = std::max(best, occurrences(windows(ref, n), g));
                num[n - 1] += std::min(occurrences(cand, g), best);
            }
        }
    }
    if (c == 0) return 0.0;
    double product = 1.0;
    for (int n = 0; n < 4; ++n) {
        const double a = num[n] + (smoothing && n > 0 ? 1.0 : 0.0);
        const double b = den[n] + (smoothing && n > 0 ? 1.0 : 0.0);
        if (a == 0 || b == 0) return 0.0;
        product *= a / b;
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::pow(product, 0.25);
}

// Longest common subsequence by enumerating every subsequence of `a`.
inline int lcs(const Sentence& a, const Sentence& b) {
    int best = 0;
    const std::size_t n = a.size();
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        const int size = __builtin_popcountll(mask);
        if (size <= best) continue;
        std::size_t j = 0;
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i) {
            if (!((mask >> i) & 1u)) continue;
            while (j < b.size() && b[j] != a[i]) ++j;
            if (j == b.size()) ok = false;
            else ++j;
        }
        if (ok) best = size;
    }
    return best;
}

inline double rouge_l(const sgmt::EvalCorpus& corpus) {
    double sum = 0;
    for (const auto& item : corpus.items) {
        double best = 0;
        for (const auto& ref : item.references) {
            const int l = lcs(item.candidate, ref);
            if (l == 0) continue;
            const double p = double(l) / double(item.candidate.size());
            const double r = double(l) / double(ref.size());
            best = std::max(best, 2 * p * r / (p + r));
        }
        sum += best;
    }
    return sum / double(corpus.items.size());
}

struct AlignScore {
    int matches = 0;
    int chunks = 0;
};

// Every partial one-to-one matching of equal words, scored by matches then chunks.
inline AlignScore best_alignment(const Sentence& cand, const Sentence& ref) {
    AlignScore best;
    best.chunks = 1 << 30;
    std::vector<int> target(cand.size(), -1);
    std::vector<bool> used(ref.size(), false);
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        if (i == cand.size()) {
            int m = 0;
            int ch = 0;
            for (std::size_t t = 0; t < cand.size(); ++t) {
                if (target[t] < 0) continue;
                ++m;
                const bool joined = t > 0 && target[t - 1] >= 0 && target[t] == target[t - 1] + 1;
                if (!joined) ++ch;
            }
            if (m > best.matches || (m == best.matches && ch < best.chunks)) best = {m, ch};
            return;
        }
        target[i] = -1;
        visit(i + 1);
        for (std::size_t j = 0; j < ref.size(); ++j) {
            if (used[j] || ref[j] != cand[i]) continue;
            used[j] = true;
            target[i] = static_cast<int>(j);
            visit(i + 1);
            used[j] = false;
            target[i] = -1;
        }
    };
    visit(0);
    if (best.matches == 0) best.chunks = 0;
    return best;
}

inline double meteor(const sgmt::EvalCorpus& corpus) {
    double sum = 0;
    for (const auto& item : corpus.items) {
        double best = 0;
        for (const auto& ref : item.references) {
            const AlignScore a = best_alignment(item.candidate, ref);
            if (a.matches == 0) continue;
            const double p = double(a.matches) / double(item.candidate.size());
            const double r = double(a.matches) / double(ref.size());
            const double f = 10 * p * r / (r + 9 * p);
            best = std::max(best, f * (1 - 0.5 * std::pow(double(a.chunks) / a.matches, 3)));
        }
        sum += best;
    }
    return sum / double(corpus.items.size());
}

inline double cider(const sgmt::EvalCorpus& corpus, double sigma = 6.0) {
    const double N = double(corpus.items.size());
    auto df = [&](const std::string& g, int n) {
        int count = 0;
        for (const auto& item : corpus.items) {
            bool found = false;
            for (const auto& ref : item.references) found = found || occurrences(windows(ref, n), g) > 0;
            count += found;
        }
        return double(count);
    };
    auto tfidf = [&](const Sentence& s, int n) {
        std::map<std::string, double> v;
        const auto grams = windows(s, n);
        for (const auto& g : grams) {
            if (v.count(g)) continue;
            v[g] = occurrences(grams, g) * (std::log(N) - std::log(std::max(1.0, df(g, n))));
        }
        return v;
    };
    auto norm = [](const std::map<std::string, double>& v) {
        double s = 0;
        for (const auto& kv : v) s += kv.second * kv.second;
        return std::sqrt(s);
    };
    double total = 0;
    for (const auto& item : corpus.items) {
        double item_score = 0;
        for (const auto& ref : item.references) {
            const double delta = double(item.candidate.size()) - double(ref.size());
            double sim_sum = 0;
            for (int n = 1; n <= 4; ++n) {
                const auto vh = tfidf(item.candidate, n);
                const auto vr = tfidf(ref, n);
                double dot = 0;
                for (const auto& [g, w] : vh) {
                    const auto it = vr.find(g);
                    if (it != vr.end()) dot += std::min(w, it->second) * it->second;
                }
                const double nh = norm(vh);
                const double nr = norm(vr);
                double sim = (nh != 0 && nr != 0) ? dot / (nh * nr) : dot;
                sim *= std::exp(-delta * delta / (2 * sigma * sigma));
                sim_sum += sim;
            }
            item_score += sim_sum / 4.0;
        }
        total += 10.0 * item_score / double(item.references.size());
    }
    return total / N;
}

// Random corpus with sentences of at most 8 tokens over a vocabulary of at most 10 words.
inline sgmt::EvalCorpus random_corpus(sgmt::Rng& rng) {
    const int vocab = rng.between(2, 10);
    const int items = rng.between(1, 6);
    auto sentence = [&](int min_len) {
        Sentence s;
        const int len = rng.between(min_len, 8);
        for (int i = 0; i < len; ++i) s.push_back("w" + std::to_string(rng.between(0, vocab - 1)));
        return s;
    };
    sgmt::EvalCorpus corpus;
    for (int i = 0; i < items; ++i) {
        sgmt::EvalItem item;
        item.id = "item" + std::to_string(i);
        item.candidate = sentence(0);
        const int refs = rng.between(1, 3);
        for (int r = 0; r < refs; ++r) item.references.push_back(sentence(1));
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

// Central finite differences of loss() for every entry of every named parameter.
// Returns, per parameter name, ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6).
// The floor covers gradients that vanish identically, such as attention key biases.
inline std::map<std::string, double> gradient_check(const sgmt::TrainingSample& sample, sgmt::ModelParams params,
                                                    const sgmt::ModelConfig& cfg, double beta, double step = 1e-5) {
    const sgmt::GradientResult analytic = sgmt::backward(sample, params, cfg, beta);
    std::map<std::string, double> errors;
    for (std::size_t p = 0; p < params.count(); ++p) {
        sgmt::Matrix& value = params.value(p);
        sgmt::Matrix numeric(value.rows(), value.cols());
        for (Eigen::Index k = 0; k < value.size(); ++k) {
            const double saved = value.data()[k];
            value.data()[k] = saved + step;
            const double up = sgmt::loss(sgmt::forward(sample, params, cfg), sample.caption, sample.subtype, beta).total;
            value.data()[k] = saved - step;
            const double down = sgmt::loss(sgmt::forward(sample, params, cfg), sample.caption, sample.subtype, beta).total;
            value.data()[k] = saved;
            numeric.data()[k] = (up - down) / (2 * step);
        }
        const sgmt::Matrix& a = analytic.grads.at(params.name(p));
        const double scale = std::max({a.norm(), numeric.norm(), 1e-6});
        errors[params.name(p)] = (a - numeric).norm() / scale;
    }
    return errors;
}

} // namespace oracle
