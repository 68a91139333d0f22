#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "cona/error.hpp"
#include "cona/eval.hpp"

using namespace cona;
using namespace cona::eval;

namespace {

// Sort, drop the first and last element, then textbook mean and n-1 deviation.
std::pair<double, double> slice_oracle(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    if (v.size() >= 3) v = std::vector<double>(v.begin() + 1, v.end() - 1);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

LoopScoreSample sample(FeedbackLoopType loop, TextLevel level, std::size_t round, std::vector<double> trials) {
    LoopScoreSample s;
    s.loop_type = loop;
    s.text_level = level;
    s.round_index = round;
    s.trial_scores = std::move(trials);
    return s;
}

}  // namespace

TEST_CASE("dikw label parsing") {
    CHECK(parse_dikw_labels("DATA, INFORMATION") == LabelSet{DikwLevel::Data, DikwLevel::Information});
    CHECK(parse_dikw_labels("WISDOM") == LabelSet{DikwLevel::Wisdom});
    CHECK(parse_dikw_labels(" knowledge , data. ") == LabelSet{DikwLevel::Data, DikwLevel::Knowledge});
    CHECK_FALSE(parse_dikw_labels("DATA, INSIGHT"));
    CHECK_FALSE(parse_dikw_labels(""));
}

TEST_CASE("score is the highest label for every non-empty subset") {
    for (unsigned mask = 1; mask < 16; ++mask) {
        std::vector<std::string> names;
        int oracle = 0;
        for (int bit = 0; bit < 4; ++bit) {
            if (mask & (1u << bit)) {
                names.push_back(std::string(judge_token(kAllLevels[static_cast<std::size_t>(bit)])));
                oracle = bit + 1;
            }
        }
        std::string reply;
        for (const auto& n : names) reply += (reply.empty() ? "" : ", ") + n;
        backend::ScriptedBackend judge(std::vector<backend::ScriptEntry>{{"eval.x", reply}});
        const auto labels = label_dikw("some answer", judge, "eval.x");
        CHECK(labels.size() == names.size());
        CHECK(score_qa(labels) == oracle);
    }
    try {
        score_qa({});
        FAIL("expected EmptyLabels");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyLabels);
    }
}

TEST_CASE("labeling re-asks once") {
    backend::ScriptedBackend ok(std::vector<backend::ScriptEntry>{{"eval.q", "It is data."}, {"eval.q.retry", "DATA"}});
    CHECK(label_dikw("answer", ok, "eval.q") == LabelSet{DikwLevel::Data});
    backend::ScriptedBackend bad(std::vector<backend::ScriptEntry>{{"eval.q", "?"}, {"eval.q.retry", "still ?"}});
    try {
        label_dikw("answer", bad, "eval.q");
        FAIL("expected JudgeUnparseable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::JudgeUnparseable);
    }
}

TEST_CASE("numeric score parsing") {
    CHECK(parse_score("7") == 7.0);
    CHECK(parse_score("Score: 8.5/10") == 8.5);
    CHECK(parse_score("42, I mean 9") == 9.0);
    CHECK_FALSE(parse_score("excellent"));
}

TEST_CASE("loop round scoring") {
    backend::ScriptedBackend judge(std::vector<backend::ScriptEntry>(5, {"*", "7"}));
    LoopRoundRequest req{2, 3, TextLevel::Professional, "eval.loop.q3.r3"};
    const auto s = score_loop_round("q", "a", FeedbackLoopType::Analogy, 5, judge, req);
    CHECK(s.trial_scores == std::vector<double>(5, 7.0));
    CHECK(s.text_level == TextLevel::Professional);
    CHECK(judge.requests()[4].tag == "eval.loop.q3.r3.t5");
    CHECK(judge.requests()[0].messages[1].content.find(kRubricVersion) != std::string::npos);

    backend::ScriptedBackend d(std::vector<backend::ScriptEntry>(3, {"*", "6"}));
    CHECK(score_loop_round("q", "a", FeedbackLoopType::Dilemma, 3, d, req).text_level == TextLevel::None);
    CHECK_THROWS_AS(score_loop_round("q", "a", FeedbackLoopType::Analogy, 2, d, req), Error);
    backend::ScriptedBackend junk(std::vector<backend::ScriptEntry>{{"*", "great"}});
    CHECK_THROWS_AS(score_loop_round("q", "a", FeedbackLoopType::Analogy, 3, junk, req), Error);
}

TEST_CASE("trimmed mean against the sort-slice oracle") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(3 + rng() % 8);
        for (auto& x : v) x = u(rng);
        const auto [mean, sd] = slice_oracle(v);
        const auto stats = trimmed_mean(v);
        CHECK(std::abs(stats.mean - mean) < 1e-12);
        CHECK(std::abs(stats.std - sd) < 1e-12);
        CHECK(stats.n_effective == v.size() - 2);
        CHECK(stats.mean >= *std::min_element(v.begin(), v.end()));
        CHECK(stats.mean <= *std::max_element(v.begin(), v.end()));
    }
}

TEST_CASE("trimmed mean small cases") {
    const std::vector<double> three{1.0, 5.0, 9.0};
    CHECK(trimmed_mean(three) == RoundStats{5.0, 0.0, 1});
    const std::vector<double> two{4.0, 6.0};
    const auto s = trimmed_mean(two);
    CHECK(s.mean == 5.0);
    CHECK(s.n_effective == 2);
    const std::vector<double> ties{7.0, 7.0, 7.0, 7.0, 7.0};
    CHECK(trimmed_mean(ties) == RoundStats{7.0, 0.0, 3});
    CHECK(summarize(ties, false).n_effective == 5);
}

TEST_CASE("table cells reproduce the reference values") {
    const std::vector<double> a{0.0, 7.72, 8.07, 8.42, 10.0};
    const std::vector<double> d{0.0, 8.79, 9.11, 9.43, 10.0};
    CHECK(format_cell(trimmed_mean(a)) == "8.07 ± 0.35");
    CHECK(format_cell(trimmed_mean(d)) == "9.11 ± 0.32");
    const auto parsed = parse_cell("8.07 ± 0.35");
    REQUIRE(parsed);
    CHECK(parsed->first == doctest::Approx(8.07));
    CHECK_FALSE(parse_cell("8.07 +- 0.35"));
}

TEST_CASE("stats table layout") {
    std::vector<LoopScoreSample> samples{
        sample(FeedbackLoopType::Analogy, TextLevel::Professional, 4, {0.0, 7.72, 8.07, 8.42, 10.0}),
        sample(FeedbackLoopType::Analogy, TextLevel::Professional, 1, {5, 5, 5, 5, 5}),
        sample(FeedbackLoopType::Dilemma, TextLevel::Professional, 4, {0.0, 8.79, 9.11, 9.43, 10.0}),
        sample(FeedbackLoopType::ProblemSolving, TextLevel::Educational, 2, {6, 6, 6}),
        sample(FeedbackLoopType::Analogy, TextLevel::Educational, 1, {4, 4, 4}),
    };
    const auto table = round_stats_table(samples);
    CHECK(table.max_round == 4);
    REQUIRE(table.rows.size() == 4);
    CHECK(table.rows[0].text_level == TextLevel::Educational);
    CHECK(table.rows[1].text_level == TextLevel::Professional);
    CHECK(table.rows[3].loop_type == FeedbackLoopType::Dilemma);
    CHECK(table.rows[3].text_level == TextLevel::None);
    CHECK_FALSE(table.rows[1].rounds[1]);

    const auto text = render_table(table);
    CHECK(text.find("8.07 ± 0.35") != std::string::npos);
    CHECK(text.find("9.11 ± 0.32") != std::string::npos);
    CHECK(text.find("Dilemma         | —") != std::string::npos);
    CHECK(text.find("R4") != std::string::npos);
    std::istringstream lines(text);
    std::string header;
    std::getline(lines, header);
    for (std::string line; std::getline(lines, line);) {
        if (line.rfind("---", 0) == 0) continue;
        CHECK(line.find(" | ") == header.find(" | "));
    }
    const auto doc = to_json(table);
    CHECK(doc["rows"][1]["rounds"][3]["text"] == "8.07 ± 0.35");
    CHECK(doc["rows"][1]["rounds"][1].is_null());
}

TEST_CASE("a cell pools the trimmed trials of all its samples") {
    std::vector<LoopScoreSample> samples{
        sample(FeedbackLoopType::Analogy, TextLevel::Commonsense, 1, {0, 6, 10}),
        sample(FeedbackLoopType::Analogy, TextLevel::Commonsense, 1, {0, 8, 10}),
    };
    const auto cell = *round_stats_table(samples).rows[0].rounds[0];
    CHECK(cell.mean == 7.0);
    CHECK(cell.n_effective == 2);
    CHECK(cell.std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("distribution conservation") {
    std::mt19937 rng(3);
    for (int i = 0; i < 100; ++i) {
        std::vector<QaScore> scores(rng() % 20);
        for (std::size_t k = 0; k < scores.size(); ++k) scores[k] = {k, {}, static_cast<int>(1 + rng() % 4)};
        const auto d = dikw_distribution(scores);
        CHECK(d.total() == scores.size());
        CHECK(d.counts.size() == 4);
    }
    std::vector<QaScore> baseline(6, QaScore{0, {DikwLevel::Data}, 1});
    const auto d = dikw_distribution(baseline);
    CHECK(d.counts.at(DikwLevel::Data) == 6);
    CHECK(render_distribution(d).find("###### 6") != std::string::npos);
}

TEST_CASE("scores sidecar round-trip") {
    ScoresSidecar s;
    s.dikw = {{0, {DikwLevel::Data, DikwLevel::Knowledge}, 3}, {1, {DikwLevel::Wisdom}, 4}};
    s.loops = {sample(FeedbackLoopType::Dilemma, TextLevel::None, 2, {1.5, 2, 9})};
    std::ostringstream out;
    write_jsonl(out, "run-z", s);
    std::istringstream in(out.str());
    std::string run_id;
    CHECK(read_jsonl(in, &run_id) == s);
    CHECK(run_id == "run-z");
    CHECK(out.str().find("\"kind\":\"loop\"") != std::string::npos);
}
