#include <doctest.h>

#include <stdexcept>

#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "teletrace/rng.hpp"
#include "teletrace/workflow.hpp"

using namespace teletrace;

namespace {

std::vector<MovementClass> seq(std::initializer_list<const char*> names) {
    std::vector<MovementClass> s;
    for (const char* n : names) s.push_back(movement_from_name(n));
    return s;
}

// Independent top-down oracle for the Levenshtein distance.
size_t lev_oracle(const std::vector<MovementClass>& a, const std::vector<MovementClass>& b) {
    std::map<std::pair<size_t, size_t>, size_t> memo;
    std::function<size_t(size_t, size_t)> rec = [&](size_t i, size_t j) -> size_t {
        if (i == a.size()) return b.size() - j;
        if (j == b.size()) return a.size() - i;
        auto key = std::make_pair(i, j);
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        size_t best = rec(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
        best = std::min(best, rec(i + 1, j) + 1);
        best = std::min(best, rec(i, j + 1) + 1);
        memo[key] = best;
        return best;
    };
    return rec(0, 0);
}

} // namespace

TEST_CASE("builtin templates honor the declared ranges and are distinct") {
    const auto& templates = builtin_templates();
    REQUIRE(templates.size() == 4);
    CHECK(templates[0].name == "Push");
    CHECK(templates[1].name == "Pull");
    CHECK(templates[2].name == "PickAndPlace");
    CHECK(templates[3].name == "Packing");

    CHECK(templates[0].min_len == 2);
    CHECK(templates[0].max_len == 3);
    CHECK(templates[2].min_len == 7);
    CHECK(templates[2].max_len == 9);
    CHECK(templates[3].min_len == 6);
    CHECK(templates[3].max_len == 9);

    std::set<std::vector<MovementClass>> all;
    size_t count = 0;
    for (const auto& t : templates) {
        for (const auto& s : t.sequences) {
            CHECK(static_cast<int>(s.size()) >= t.min_len);
            CHECK(static_cast<int>(s.size()) <= t.max_len);
            all.insert(s);
            ++count;
        }
    }
    CHECK(all.size() == count); // no sequence is shared between workflows
}

TEST_CASE("edit distance basics") {
    CHECK(edit_distance(seq({"XY", "X"}), seq({"XY", "X"})) == 0);
    CHECK(edit_distance(seq({"XY", "X"}), seq({"XY", "Y"})) == 1);
    CHECK(edit_distance({}, seq({"X", "Y"})) == 2);
    CHECK(edit_distance(seq({"X"}), {}) == 1);
    CHECK(edit_distance(seq({"X", "Y", "Z"}), seq({"Y"})) == 2);
}

TEST_CASE("edit distance matches the recursive oracle exhaustively") {
    // Every pair of sequences over a 3-symbol alphabet up to length 4.
    std::vector<MovementClass> alphabet = {MovementClass::XY, MovementClass::X,
                                           MovementClass::Z};
    std::vector<std::vector<MovementClass>> all;
    std::function<void(std::vector<MovementClass>&)> gen = [&](std::vector<MovementClass>& cur) {
        all.push_back(cur);
        if (cur.size() == 4) return;
        for (MovementClass m : alphabet) {
            cur.push_back(m);
            gen(cur);
            cur.pop_back();
        }
    };
    std::vector<MovementClass> cur;
    gen(cur);
    REQUIRE(all.size() == 121); // 1 + 3 + 9 + 27 + 81

    for (const auto& a : all) {
        for (const auto& b : all) {
            CHECK(edit_distance(a, b) == lev_oracle(a, b));
        }
    }
}

TEST_CASE("edit distance matches the oracle on random length-9 sequences") {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<MovementClass> a, b;
        size_t la = 1 + rng.bounded(9), lb = 1 + rng.bounded(9);
        for (size_t i = 0; i < la; ++i) a.push_back(static_cast<MovementClass>(rng.bounded(7)));
        for (size_t i = 0; i < lb; ++i) b.push_back(static_cast<MovementClass>(rng.bounded(7)));
        CHECK(edit_distance(a, b) == lev_oracle(a, b));
        CHECK(edit_distance(a, b) == edit_distance(b, a));
        CHECK(edit_distance(a, a) == 0);
    }
}

TEST_CASE("reconstruct: exact template sequences come back at distance zero") {
    const auto& templates = builtin_templates();
    for (const auto& t : templates) {
        for (const auto& s : t.sequences) {
            ReconstructionResult r = reconstruct(s, templates);
            CHECK(r.workflow == t.name);
            CHECK(r.distance == 0);
            CHECK_FALSE(r.ambiguous);
        }
    }
}

TEST_CASE("reconstruct: a substitution flips Push into Pull") {
    ReconstructionResult r = reconstruct(seq({"XY", "Y"}), builtin_templates());
    CHECK(r.workflow == "Pull");
    CHECK(r.distance == 0);
    CHECK(r.runner_up == 1); // Push at one substitution
}

TEST_CASE("reconstruct: equidistant input is flagged ambiguous") {
    // [XY] is one edit from both Push [XY, X] and Pull [XY, Y].
    ReconstructionResult r = reconstruct(seq({"XY"}), builtin_templates());
    CHECK(r.ambiguous);
    CHECK(r.distance == r.runner_up);
    CHECK(r.workflow == "Push"); // declaration order breaks the tie
    CHECK_THROWS_AS(reconstruct({}, builtin_templates()), std::invalid_argument);
}

TEST_CASE("recovery_rate counts per workflow and omits empty buckets") {
    std::vector<std::pair<ReconstructionResult, std::string>> results;
    ReconstructionResult push_ok{"Push", 0, 1, false};
    ReconstructionResult push_wrong{"Pull", 1, 1, false};
    for (int i = 0; i < 84; ++i) results.emplace_back(push_ok, "Push");
    for (int i = 0; i < 16; ++i) results.emplace_back(push_wrong, "Push");
    results.emplace_back(push_ok, "Pull"); // a miss for Pull

    auto rates = recovery_rate(results);
    CHECK(rates.at("Push") == doctest::Approx(0.84));
    CHECK(rates.at("Pull") == doctest::Approx(0.0));
    CHECK_FALSE(rates.count("Packing"));
    CHECK_THROWS_AS(recovery_rate({}), std::invalid_argument);
}

TEST_CASE("generate_workflow_trace expands a template into labeled flows") {
    WorkflowGenParams params;
    params.repetitions = 2;
    params.distances = {1, 2};
    params.speed_codes = {25000, 50000};
    LinkParams link;

    const auto& push = builtin_templates()[0];
    WorkflowSample sample = generate_workflow_trace(push, params, link, 5);
    CHECK(sample.workflow == "Push");
    CHECK(sample.flows.size() == sample.truth.size());
    CHECK(sample.flows.size() >= 2);
    CHECK(sample.flows.size() <= 3);
    for (size_t i = 0; i < sample.flows.size(); ++i) {
        REQUIRE(sample.flows[i].label.has_value());
        CHECK(*sample.flows[i].label == movement_name(sample.truth[i]));
        validate_trace(sample.flows[i]);
    }

    SUBCASE("same seed gives an identical sample") {
        WorkflowSample again = generate_workflow_trace(push, params, link, 5);
        REQUIRE(again.flows.size() == sample.flows.size());
        for (size_t i = 0; i < sample.flows.size(); ++i) {
            CHECK(again.flows[i].packets == sample.flows[i].packets);
        }
    }
}

TEST_CASE("oracle mode: ground-truth sequences recover every workflow") {
    WorkflowGenParams params;
    params.repetitions = 1;
    LinkParams link;
    const auto& templates = builtin_templates();
    for (size_t ti = 0; ti < templates.size(); ++ti) {
        for (uint64_t s = 0; s < 25; ++s) {
            WorkflowSample sample =
                generate_workflow_trace(templates[ti], params, link, derive_seed(1, "t", ti, s));
            ReconstructionResult r = reconstruct(sample.truth, templates);
            CHECK(r.workflow == templates[ti].name);
            CHECK(r.distance == 0);
        }
    }
}

TEST_CASE("templates load from JSON with validation") {
    std::string text = R"([
        {"name": "Wave", "range": [1, 2], "sequences": [["X"], ["X", "Y"]]},
        {"name": "Poke", "range": [2, 2], "sequences": [["Z", "Z"]]}
    ])";
    std::istringstream in(text);
    auto templates = templates_from_json(in);
    REQUIRE(templates.size() == 2);
    CHECK(templates[0].name == "Wave");
    CHECK(templates[0].sequences.size() == 2);
    CHECK(templates[1].sequences[0] == seq({"Z", "Z"}));

    std::istringstream bad(R"([{"name": "Bad", "range": [3, 4], "sequences": [["X"]]}])");
    CHECK_THROWS(templates_from_json(bad));
}
