#include <cmath>
#include <fstream>

#include "doctest.h"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "sgmt/error.hpp"
#include "sgmt/metrics.hpp"

using namespace sgmt;

namespace {

TokenList words(const std::string& text) { return tokenize(text); }

EvalCorpus single(const std::string& cand, std::initializer_list<std::string> refs) {
    EvalItem item;
    item.id = "0";
    item.candidate = words(cand);
    for (const auto& r : refs) item.references.push_back(words(r));
    EvalCorpus c;
    c.items.push_back(item);
    return c;
}

} // namespace

TEST_CASE("hand-computed scores") {
    CHECK(bleu4(single("a b c d", {"a b c d e"})) == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)).epsilon(1e-12));
    CHECK(bleu4(single("a b c d", {"a b c d"})) == doctest::Approx(1.0));
    CHECK(bleu4(single("a b c", {"a b c"})) == 0.0);
    CHECK(bleu4(single("a b c", {"a b c"}), true) > 0.0);
    CHECK(bleu4(single("", {"a b"})) == 0.0);

    CHECK(lcs_length(words("a b c"), words("a c d")) == 2);
    CHECK(rouge_l_pair(words("a b c"), words("a c d")) == doctest::Approx(2.0 / 3.0));
    CHECK(rouge_l_pair(words("x y"), words("a b")) == 0.0);
    CHECK(rouge_l_pair({}, words("a")) == 0.0);

    CHECK(meteor_pair(words("a b"), words("b a")) == doctest::Approx(0.5));
    const Alignment al = meteor_align(words("a b"), words("b a"));
    CHECK(al.matches == 2);
    CHECK(al.chunks == 2);
    for (int L = 1; L <= 6; ++L) {
        TokenList s;
        for (int i = 0; i < L; ++i) s.push_back("w" + std::to_string(i));
        CHECK(meteor_pair(s, s) == doctest::Approx(1.0 - 0.5 / (L * L * L)));
    }
    CHECK(meteor_pair(words("x"), words("a")) == 0.0);
}

TEST_CASE("cider on identical captions with distinct vocabularies") {
    EvalCorpus c;
    c.items.push_back({"0", words("a b c d e"), {words("a b c d e")}});
    c.items.push_back({"1", words("f g h i"), {words("f g h i")}});
    const CiderResult r = cider_d(c);
    CHECK(r.score == doctest::Approx(10.0).epsilon(1e-12));
    CHECK_FALSE(r.degenerate);

    const CiderResult one = cider_d(single("a b", {"a b"}));
    CHECK(one.degenerate);
    CHECK(one.score == 0.0);
}

TEST_CASE("metrics stay in range") {
    Rng rng(101);
    for (int t = 0; t < 1000; ++t) {
        const EvalCorpus c = oracle::random_corpus(rng);
        const MetricReport r = evaluate(c);
        CHECK(r.bleu4 >= 0.0);
        CHECK(r.bleu4 <= 1.0 + 1e-12);
        CHECK(r.rougeL >= 0.0);
        CHECK(r.rougeL <= 1.0 + 1e-12);
        CHECK(r.meteor >= 0.0);
        CHECK(r.meteor <= 1.0 + 1e-12);
        CHECK(r.cider >= 0.0);
        CHECK(r.cider <= 10.0 + 1e-9);
    }
}

TEST_CASE("metrics agree with brute-force oracles") {
    Rng rng(202);
    for (int t = 0; t < 300; ++t) {
        const EvalCorpus c = oracle::random_corpus(rng);
        CHECK(std::abs(bleu4(c) - oracle::bleu4(c)) <= 1e-9);
        CHECK(std::abs(bleu4(c, true) - oracle::bleu4(c, true)) <= 1e-9);
        CHECK(std::abs(rouge_l(c) - oracle::rouge_l(c)) <= 1e-9);
        CHECK(std::abs(meteor_lite(c) - oracle::meteor(c)) <= 1e-9);
        CHECK(std::abs(cider(c) - oracle::cider(c)) <= 1e-9);
        for (const auto& item : c.items) {
            for (const auto& ref : item.references) {
                CHECK(lcs_length(item.candidate, ref) == oracle::lcs(item.candidate, ref));
                const auto a = meteor_align(item.candidate, ref);
                const auto b = oracle::best_alignment(item.candidate, ref);
                CHECK(a.matches == b.matches);
                if (a.matches > 0) CHECK(a.chunks == b.chunks);
            }
        }
    }
}

TEST_CASE("corpus scores ignore item order") {
    Rng rng(303);
    for (int t = 0; t < 200; ++t) {
        EvalCorpus c = oracle::random_corpus(rng);
        const MetricReport a = evaluate(c);
        std::reverse(c.items.begin(), c.items.end());
        for (auto& item : c.items) std::reverse(item.references.begin(), item.references.end());
        const MetricReport b = evaluate(c);
        CHECK(a.bleu4 == doctest::Approx(b.bleu4).epsilon(1e-12));
        CHECK(a.rougeL == doctest::Approx(b.rougeL).epsilon(1e-12));
        CHECK(a.meteor == doctest::Approx(b.meteor).epsilon(1e-12));
        CHECK(a.cider == doctest::Approx(b.cider).epsilon(1e-12));
    }
}

TEST_CASE("a copy of the reference scores highest") {
    const TokenList ref = words("a b c");
    const std::vector<std::string> alphabet{"a", "b", "c", "d"};
    std::vector<TokenList> candidates{{}};
    for (int len = 1; len <= 4; ++len) {
        std::vector<TokenList> next;
        for (const auto& c : candidates) {
            if (static_cast<int>(c.size()) != len - 1) continue;
            for (const auto& w : alphabet) {
                TokenList e = c;
                e.push_back(w);
                next.push_back(e);
            }
        }
        candidates.insert(candidates.end(), next.begin(), next.end());
    }
    const double rouge_best = rouge_l_pair(ref, ref);
    const double meteor_best = meteor_pair(ref, ref);
    for (const auto& c : candidates) {
        CHECK(rouge_l_pair(c, ref) <= rouge_best + 1e-12);
        CHECK(meteor_pair(c, ref) <= meteor_best + 1e-12);
    }
}

TEST_CASE("decimal formatting") {
    CHECK(format_decimal4(1.0) == "1.0000");
    CHECK(format_decimal4(0.0) == "0.0000");
    CHECK(format_decimal4(0.03125) == "0.0312");
    CHECK(format_decimal4(0.09375) == "0.0938");
    CHECK(format_decimal4(0.12344) == "0.1234");
    MetricReport r;
    r.bleu4 = 0.5;
    CHECK(format_report(r) == R"({"bleu4": 0.5000, "cider": 0.0000, "rougeL": 0.0000, "meteor": 0.0000})");
}

TEST_CASE("evaluation rejects invalid input") {
    EvalCorpus empty;
    CHECK_THROWS_AS(evaluate(empty), Error);
    EvalCorpus no_refs;
    no_refs.items.push_back({"0", words("a"), {}});
    CHECK_THROWS_AS(evaluate(no_refs), Error);
}

TEST_CASE("corpus files join by id") {
    const auto dir = fixtures::scratch("metrics_join");
    std::filesystem::create_directories(dir);
    {
        std::ofstream c(dir / "cand.jsonl");
        c << R"({"id": "b", "caption": "x y"})" << '\n' << R"({"id": "a", "caption": "p q"})" << '\n';
        std::ofstream r(dir / "refs.jsonl");
        r << R"({"id": "a", "caption": "p q"})" << '\n'
          << R"({"id": "b", "references": ["x y", "x z"]})" << '\n';
    }
    const EvalCorpus c = load_corpus(dir / "cand.jsonl", dir / "refs.jsonl");
    REQUIRE(c.items.size() == 2);
    CHECK(c.items[0].id == "a");
    CHECK(c.items[0].candidate == words("p q"));
    CHECK(c.items[1].references.size() == 2);

    {
        std::ofstream r(dir / "missing.jsonl");
        r << R"({"id": "c", "caption": "p"})" << '\n';
        std::ofstream d(dir / "dup.jsonl");
        d << R"({"id": "a", "caption": "p"})" << '\n' << R"({"id": "a", "caption": "q"})" << '\n';
    }
    CHECK_THROWS_AS(load_corpus(dir / "cand.jsonl", dir / "missing.jsonl"), Error);
    CHECK_THROWS_AS(load_corpus(dir / "dup.jsonl", dir / "refs.jsonl"), Error);
}
