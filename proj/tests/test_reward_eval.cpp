// SPDX-License-Identifier: Apache-2.0
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/scenarios.hpp"

#include <groundrec/evaluation.hpp>
#include <groundrec/reward.hpp>

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

using namespace groundrec;
using Catch::Matchers::WithinAbs;

namespace
{

auto answered(std::string id, UserId user, std::string answer, std::size_t groundings = 0) -> Trajectory
{
    auto t = Trajectory {};
    t.episode_id = std::move(id);
    t.user_id = user;
    t.answer_title = std::move(answer);
    t.grounding_count = groundings;
    t.status = EpisodeStatus::Completed;
    return t;
}

auto invalid(std::string id, UserId user) -> Trajectory
{
    auto t = Trajectory {};
    t.episode_id = std::move(id);
    t.user_id = user;
    t.status = EpisodeStatus::FormatInvalid;
    t.verdict = FormatVerdict::fail(Violation::NoAnswer);
    return t;
}

auto uniform_scores(std::size_t n, double theta, double old, double ref) -> TokenScores
{
    return TokenScores {
        .token_ids = {},
        .logp_theta = std::vector<double>(n, theta),
        .logp_old = std::vector<double>(n, old),
        .logp_ref = std::vector<double>(n, ref),
        .mask = std::vector<std::uint8_t>(n, 1),
    };
}

auto random_scores(std::mt19937_64& rng, std::size_t n) -> TokenScores
{
    auto lp = std::uniform_real_distribution<double>(-6.0, -0.01);
    auto drift = std::uniform_real_distribution<double>(-0.5, 0.5);
    auto s = TokenScores {};
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        auto const th = lp(rng);
        s.logp_theta.push_back(th);
        s.logp_old.push_back(th + drift(rng));
        s.logp_ref.push_back(th + drift(rng));
        s.mask.push_back(rng() % 3 == 0 ? 0 : 1);
    }
    s.mask[rng() % n] = 1;
    return s;
}

auto oracle_loss(TokenScores const& s, double adv, double eps, double beta, bool seq_sum = false) -> double
{
    auto mask = std::vector<int>(s.mask.begin(), s.mask.end());
    return oracle::loss(s.logp_theta, s.logp_old, s.logp_ref, mask, adv, eps, beta, seq_sum);
}

auto score_dir() -> std::filesystem::path
{
    return fixtures::data_dir() / "score";
}

} // namespace

TEST_CASE("rank reward is single-item NDCG", "[reward]")
{
    CHECK_THAT(rank_reward(1), WithinAbs(1.0, 1e-12));
    CHECK_THAT(rank_reward(3), WithinAbs(0.5, 1e-12));
    CHECK_THAT(rank_reward(7), WithinAbs(1.0 / 3.0, 1e-12));
    CHECK(rank_reward(2) > rank_reward(3));
    CHECK_THROWS_AS(rank_reward(0), UsageError);
}

TEST_CASE("reward gates on the format", "[reward]")
{
    auto const world = fixtures::LineWorld(10, {});

    auto const hit = reward(answered("1-0", 1, "Item 04"), *world.grounder, 4);
    CHECK(hit.format_valid);
    CHECK(hit.rank == 1u);
    CHECK(hit.value == 1.0);

    // seen from item 04: items 04, 03, 05 are closer than item 06, and item 02 ties it
    // with a smaller id, so item 06 ranks fifth
    auto const near = reward(answered("1-1", 1, "Item 04"), *world.grounder, 6);
    CHECK(near.rank == 5u);
    CHECK_THAT(near.value, WithinAbs(1.0 / std::log2(6.0), 1e-12));

    auto const bad = reward(invalid("1-2", 1), *world.grounder, 4);
    CHECK_FALSE(bad.format_valid);
    CHECK_FALSE(bad.rank);
    CHECK(bad.value == -0.5);
    CHECK(bad.recommendation == 0.0);

    // completed status but a broken transcript still earns the penalty
    auto broken = answered("1-3", 1, "Item 04");
    broken.verdict = FormatVerdict::fail(Violation::NoAnswer);
    CHECK(reward(broken, *world.grounder, 4).value == -0.5);

    auto aborted = invalid("1-4", 1);
    aborted.status = EpisodeStatus::Aborted;
    CHECK_THROWS_AS(reward(aborted, *world.grounder, 4), UsageError);
}

TEST_CASE("group advantages", "[reward]")
{
    SECTION("two members")
    {
        auto const r = std::vector<double> { 1.0, 0.0 };
        auto const g = advantages(r);
        CHECK_FALSE(g.degenerate);
        CHECK_THAT(g.advantages[0], WithinAbs(1.0, 1e-6));
        CHECK_THAT(g.advantages[1], WithinAbs(-1.0, 1e-6));
    }
    SECTION("all equal")
    {
        auto const r = std::vector<double> { 0.5, 0.5, 0.5 };
        auto const g = advantages(r);
        CHECK(g.degenerate);
        CHECK(g.advantages == std::vector<double> { 0.0, 0.0, 0.0 });
    }
    SECTION("mixed group against the oracle")
    {
        auto const r = std::vector<double> { 1.0, 0.5, 0.25, -0.5, -0.5, 0.63 };
        auto const g = advantages(r);
        auto const want = oracle::advantages(r);
        REQUIRE(g.advantages.size() == want.size());
        for (auto i = std::size_t { 0 }; i < r.size(); ++i)
            CHECK_THAT(g.advantages[i], WithinAbs(want[i], 1e-12));
        CHECK(g.rewards == r);
    }
    SECTION("random groups are standardized")
    {
        // rewards take the values an episode can actually earn
        auto rng = std::mt19937_64(5);
        auto const earnable = std::array { rank_reward(1), rank_reward(2), rank_reward(3), rank_reward(4), -0.5 };
        for (auto trial = 0; trial < 500; ++trial)
        {
            auto r = std::vector<double>(2 + rng() % 15);
            for (auto& x: r)
                x = earnable[rng() % earnable.size()];
            r[0] = 1.0;
            r[1] = -0.5;
            auto const a = advantages(r).advantages;
            CHECK(std::abs(oracle::mean(a)) <= 1e-9);
            CHECK(std::abs(oracle::popstd(a) - 1.0) <= 1e-6);
        }
    }
    SECTION("shift and positive scale do not change the result")
    {
        auto const r = std::vector<double> { 0.9, 0.1, 0.4, -0.5 };
        auto moved = r;
        for (auto& x: moved)
            x = 3.0 * x + 7.0;
        auto const a = advantages(r).advantages;
        auto const b = advantages(moved).advantages;
        for (auto i = std::size_t { 0 }; i < r.size(); ++i)
            CHECK_THAT(a[i], WithinAbs(b[i], 1e-7));
    }
    SECTION("order follows the input")
    {
        auto const r = std::vector<double> { 0.2, 1.0, -0.5 };
        auto const reversed = std::vector<double> { -0.5, 1.0, 0.2 };
        auto const a = advantages(r).advantages;
        auto const b = advantages(reversed).advantages;
        CHECK_THAT(a[0], WithinAbs(b[2], 1e-12));
        CHECK_THAT(a[1], WithinAbs(b[1], 1e-12));
        CHECK_THAT(a[2], WithinAbs(b[0], 1e-12));
    }
    SECTION("groups need at least two members")
    {
        CHECK_THROWS_AS(advantages(std::vector<double> { 1.0 }), UsageError);
        CHECK_THROWS_AS(advantages(std::vector<double> {}), UsageError);
    }
}

TEST_CASE("clipped loss", "[reward]")
{
    auto const hyper = GrpoHyper { .clip_eps = 0.2, .kl_beta = 0.0, .aggregation = LossAggregation::TokenMean };

    SECTION("equal log-probabilities give minus the advantage")
    {
        for (auto a: { 1.5, -0.7, 0.0 })
        {
            auto const out = masked_grpo_loss(uniform_scores(7, -1.3, -1.3, -1.3),
                                              a, GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean });
            CHECK_THAT(out.loss, WithinAbs(-a, 1e-12));
            CHECK(out.mean_kl == 0.0);
            CHECK(out.mean_ratio == 1.0);
            CHECK(out.clip_fraction == 0.0);
            CHECK(out.tokens == 7u);
        }
    }
    SECTION("ratio above the clip range with a positive advantage")
    {
        // ratio 2 is capped at 1.2
        auto const out = masked_grpo_loss(uniform_scores(1, std::log(2.0), 0.0, 0.0), 1.0, hyper);
        CHECK_THAT(out.loss, WithinAbs(-1.2, 1e-12));
        CHECK(out.clip_fraction == 1.0);
        CHECK_THAT(out.mean_ratio, WithinAbs(2.0, 1e-12));
    }
    SECTION("ratio above the clip range with a negative advantage keeps the raw ratio")
    {
        auto const out = masked_grpo_loss(uniform_scores(1, std::log(2.0), 0.0, 0.0), -1.0, hyper);
        CHECK_THAT(out.loss, WithinAbs(2.0, 1e-12));
        CHECK(out.clip_fraction == 0.0);
    }
    SECTION("random tokens against the scalar oracle")
    {
        auto rng = std::mt19937_64(17);
        for (auto trial = 0; trial < 200; ++trial)
        {
            auto const s = random_scores(rng, 1 + rng() % 80);
            auto const a = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
            auto const mean = GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean };
            auto const sum = GrpoHyper { 0.2, 0.04, LossAggregation::SequenceSum };
            CHECK_THAT(masked_grpo_loss(s, a, mean).loss, WithinAbs(oracle_loss(s, a, 0.2, 0.04), 1e-12));
            CHECK_THAT(masked_grpo_loss(s, a, sum).loss, WithinAbs(oracle_loss(s, a, 0.2, 0.04, true), 1e-10));
        }
    }
    SECTION("masked tokens have no influence")
    {
        auto rng = std::mt19937_64(23);
        auto s = random_scores(rng, 50);
        auto const before = masked_grpo_loss(s, 0.8, GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean });
        for (auto i = std::size_t { 0 }; i < s.mask.size(); ++i)
            if (s.mask[i] == 0)
            {
                s.logp_theta[i] = -1000.0 + static_cast<double>(i);
                s.logp_old[i] = 3.0;
                s.logp_ref[i] = -77.0;
            }
        auto const after = masked_grpo_loss(s, 0.8, GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean });
        CHECK(before.loss == after.loss);
        CHECK(before.mean_kl == after.mean_kl);
        CHECK(before.tokens == after.tokens);
    }
    SECTION("an unbounded clip range reduces to the plain ratio objective")
    {
        auto rng = std::mt19937_64(29);
        auto const wide = GrpoHyper { 1e9, 0.0, LossAggregation::TokenMean };
        for (auto trial = 0; trial < 50; ++trial)
        {
            auto const s = random_scores(rng, 1 + rng() % 40);
            auto const a = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
            auto const out = masked_grpo_loss(s, a, wide);
            CHECK_THAT(out.loss, WithinAbs(-a * out.mean_ratio, 1e-10));
            CHECK(out.clip_fraction == 0.0);
        }
    }
    SECTION("the KL estimate is never negative")
    {
        auto rng = std::mt19937_64(31);
        auto lp = std::uniform_real_distribution<double>(-20.0, 0.0);
        for (auto i = 0; i < 10000; ++i)
            CHECK(kl_k3(lp(rng), lp(rng)) >= 0.0);
        CHECK(kl_k3(-2.0, -2.0) == 0.0);
    }
    SECTION("bad input")
    {
        auto s = uniform_scores(4, -1.0, -1.0, -1.0);
        s.logp_old[2] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_WITH(masked_grpo_loss(s, 1.0, hyper), Catch::Matchers::ContainsSubstring("token 2"));

        auto none = uniform_scores(3, -1.0, -1.0, -1.0);
        none.mask.assign(3, 0);
        CHECK_THROWS_AS(masked_grpo_loss(none, 1.0, hyper), DataError);

        auto ragged = uniform_scores(3, -1.0, -1.0, -1.0);
        ragged.logp_ref.pop_back();
        CHECK_THROWS_AS(masked_grpo_loss(ragged, 1.0, hyper), DataError);

        CHECK_THROWS_AS(masked_grpo_loss(uniform_scores(2, -1.0, -1.0, -1.0), 1.0, GrpoHyper { 0.0, 0.0 }),
                        UsageError);
        CHECK_THROWS_AS(masked_grpo_loss(uniform_scores(2, -1.0, -1.0, -1.0), 1.0, GrpoHyper { 0.2, -1.0 }),
                        UsageError);
        CHECK_THROWS_AS(masked_grpo_loss(uniform_scores(2, -1.0, -1.0, -1.0),
                                         std::numeric_limits<double>::infinity(), hyper),
                        DataError);
    }
}

TEST_CASE("token mask from character offsets", "[reward]")
{
    auto transcript = Transcript {};
    transcript.append("<think>a</think><ground>Q</ground>", SegmentSource::PolicyGenerated); // [0, 34)
    transcript.append("\n<item_list>\n1. X\n</item_list>\n", SegmentSource::ItemListInjected);
    transcript.append("<answer>X</answer>", SegmentSource::PolicyGenerated);
    auto const segs = transcript.segments();
    auto const list_end = segs[1].span.end;

    auto const offsets = std::vector<Span> {
        { 0, 7 },                   // inside the first policy turn
        { 30, 34 },                 // last token of that turn
        { 32, 36 },                 // straddles policy and injected text
        { 35, 40 },                 // injected
        { list_end, list_end + 8 }, // second policy turn
        { list_end + 8, list_end + 18 },
    };
    CHECK(mask_from_offsets(segs, offsets) == std::vector<std::uint8_t> { 1, 1, 0, 0, 1, 1 });
    CHECK(mask_from_offsets(segs, std::vector<Span> { { list_end + 10, list_end + 30 } })
          == std::vector<std::uint8_t> { 0 });
}

TEST_CASE("log-probability files", "[reward]")
{
    auto const dir = fixtures::TempDir();
    auto const records = std::vector<LogprobRecord> {
        { "1-0", TokenScores { { 5, 6 }, { -0.5, -1.25 }, { -0.5, -1.0 }, { -0.75, -1.0 }, { 1, 0 } } },
    };
    write_logprobs(dir.path() / "lp.jsonl", records);
    auto const back = read_logprobs(dir.path() / "lp.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back.at("1-0").logp_theta == records[0].scores.logp_theta);
    CHECK(back.at("1-0").mask == records[0].scores.mask);

    fixtures::write_text(dir.path() / "ragged.jsonl",
                         R"({"episode_id":"a","token_ids":[1,2],"logp_theta":[0],"logp_old":[0,0],)"
                         R"("logp_ref":[0,0],"mask":[1,1]})"
                         "\n");
    CHECK_THROWS_AS(read_logprobs(dir.path() / "ragged.jsonl"), DataError);
    fixtures::write_text(dir.path() / "mask.jsonl",
                         R"({"episode_id":"a","token_ids":[1],"logp_theta":[0],"logp_old":[0],)"
                         R"("logp_ref":[0],"mask":[2]})"
                         "\n");
    CHECK_THROWS_AS(read_logprobs(dir.path() / "mask.jsonl"), DataError);
}

TEST_CASE("scoring whole groups", "[reward]")
{
    auto const world = fixtures::LineWorld(12, {});
    auto const targets = std::map<UserId, ItemId> { { 1, 3 }, { 2, 8 }, { 3, 5 } };
    auto trajs = std::vector<Trajectory> {
        answered("1-0", 1, "Item 03"), answered("1-1", 1, "Item 06"),
        answered("2-0", 2, "Item 08"), invalid("2-1", 2),
        answered("3-0", 3, "Item 05"), // incomplete group
    };
    auto rng = std::mt19937_64(41);
    auto logprobs = std::map<std::string, TokenScores> {};
    for (auto const& t: trajs)
        logprobs[t.episode_id] = random_scores(rng, 12);
    auto const hyper = GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean };

    auto const out = score_groups(trajs, logprobs, targets, *world.grounder, hyper, 2);
    REQUIRE(out.rows.size() == 4);
    CHECK(out.groups_skipped == 1);
    REQUIRE(out.warnings.size() == 1);
    CHECK_THAT(out.warnings[0], Catch::Matchers::ContainsSubstring("user 3"));

    CHECK(out.rows[0].episode_id == "1-0");
    CHECK(out.rows[0].reward == 1.0);
    CHECK_THAT(out.rows[1].reward, WithinAbs(1.0 / std::log2(1.0 + 6.0), 1e-12)); // five items sit closer to item 06
    CHECK(out.rows[3].reward == -0.5);
    for (auto const& r: out.rows)
    {
        CHECK_THAT(std::abs(r.advantage), WithinAbs(1.0, 1e-6));
        auto const want = oracle_loss(logprobs.at(r.episode_id), r.advantage, 0.2, 0.04);
        CHECK_THAT(r.loss, WithinAbs(want, 1e-12));
    }

    SECTION("input order does not matter")
    {
        auto shuffled = trajs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto const again = score_groups(shuffled, logprobs, targets, *world.grounder, hyper, 2);
        REQUIRE(again.rows.size() == out.rows.size());
        for (auto i = std::size_t { 0 }; i < out.rows.size(); ++i)
        {
            CHECK(again.rows[i].episode_id == out.rows[i].episode_id);
            CHECK(again.rows[i].loss == out.rows[i].loss);
            CHECK(again.rows[i].advantage == out.rows[i].advantage);
        }
    }
    SECTION("groups with aborted members or missing log-probabilities are skipped")
    {
        auto with_abort = trajs;
        with_abort[1].status = EpisodeStatus::Aborted;
        auto const a = score_groups(with_abort, logprobs, targets, *world.grounder, hyper, 2);
        CHECK(a.rows.size() == 2);
        CHECK(a.groups_skipped == 2);

        auto partial = logprobs;
        partial.erase("2-1");
        auto const b = score_groups(trajs, partial, targets, *world.grounder, hyper, 2);
        CHECK(b.rows.size() == 2);
        CHECK(b.groups_skipped == 2);
    }
    SECTION("a missing target is a data error")
    {
        auto const few = std::map<UserId, ItemId> { { 1, 3 } };
        CHECK_THROWS_AS(score_groups(trajs, logprobs, few, *world.grounder, hyper, 2), DataError);
    }
    SECTION("group loss is the member mean")
    {
        auto const first = std::span(out.rows).subspan(0, 2);
        CHECK(group_loss(first) == (out.rows[0].loss + out.rows[1].loss) / 2.0);
    }
}

TEST_CASE("scored output matches the reference scorer byte for byte", "[reward][golden]")
{
    auto const dir = score_dir();
    auto const catalog = load_catalog(dir / "catalog.jsonl");
    auto const embedder = ToyEmbedder(16, 0);
    auto const store = build_index(catalog, embedder);
    auto const grounder = Grounder(store, embedder);
    auto const seqs = read_sequences(dir / "split.jsonl", &catalog);
    auto const trajs = read_trajectories(dir / "trajectories.jsonl");
    auto const logprobs = read_logprobs(dir / "logprobs.jsonl");

    auto const out = score_groups(trajs, logprobs, targets_of(seqs), grounder,
                                  GrpoHyper { 0.2, 0.04, LossAggregation::TokenMean }, 3);
    CHECK(out.groups_skipped == 1);

    auto const tmp = fixtures::TempDir();
    write_scored(tmp.path() / "scored.jsonl", out.rows);
    CHECK(fixtures::read_text(tmp.path() / "scored.jsonl") == fixtures::read_text(dir / "golden_scored.jsonl"));
}

TEST_CASE("ranking metrics", "[eval]")
{
    auto constexpr miss = std::optional<std::size_t> {};
    auto const cutoffs = std::vector<std::size_t> { 5, 10, 20 };

    SECTION("hand-computed fixture")
    {
        auto const ranks = std::vector<std::optional<std::size_t>> { 1, 6, 30, miss };
        auto const m = ranking_metrics(ranks, cutoffs);
        REQUIRE(m.size() == 3);
        CHECK_THAT(m[0].hit_ratio, WithinAbs(0.25, 1e-12));
        CHECK_THAT(m[1].hit_ratio, WithinAbs(0.5, 1e-12));
        CHECK_THAT(m[2].hit_ratio, WithinAbs(0.5, 1e-12));
        CHECK_THAT(m[0].ndcg, WithinAbs(0.25, 1e-12));
        CHECK_THAT(m[1].ndcg, WithinAbs(0.25 + (1.0 / std::log2(7.0)) / 4.0, 1e-12));
        CHECK_THAT(m[2].ndcg, WithinAbs(m[1].ndcg, 1e-12));
    }
    SECTION("random rank vectors")
    {
        auto rng = std::mt19937_64(43);
        for (auto trial = 0; trial < 300; ++trial)
        {
            auto ranks = std::vector<std::optional<std::size_t>>(1 + rng() % 40);
            for (auto& r: ranks)
                r = rng() % 5 == 0 ? miss : std::optional<std::size_t>(1 + rng() % 30);
            auto const m = ranking_metrics(ranks, cutoffs);
            for (auto i = std::size_t { 0 }; i < m.size(); ++i)
            {
                auto hits = 0.0;
                auto gain = 0.0;
                for (auto const& r: ranks)
                {
                    hits += r && *r <= m[i].k ? 1.0 : 0.0;
                    gain += oracle::ndcg_single(r, m[i].k);
                }
                CHECK_THAT(m[i].hit_ratio, WithinAbs(hits / static_cast<double>(ranks.size()), 1e-12));
                CHECK_THAT(m[i].ndcg, WithinAbs(gain / static_cast<double>(ranks.size()), 1e-12));
                CHECK(m[i].ndcg <= m[i].hit_ratio + 1e-15);
                if (i > 0)
                {
                    CHECK(m[i].hit_ratio >= m[i - 1].hit_ratio);
                    CHECK(m[i].ndcg >= m[i - 1].ndcg);
                }
            }
            auto permuted = ranks;
            std::shuffle(permuted.begin(), permuted.end(), rng);
            auto const p = ranking_metrics(permuted, cutoffs);
            for (auto i = std::size_t { 0 }; i < m.size(); ++i)
            {
                CHECK_THAT(p[i].hit_ratio, WithinAbs(m[i].hit_ratio, 1e-12));
                CHECK_THAT(p[i].ndcg, WithinAbs(m[i].ndcg, 1e-12));
            }
        }
    }
    SECTION("no samples")
    {
        CHECK_THROWS_AS(ranking_metrics(std::vector<std::optional<std::size_t>> {}, cutoffs), DataError);
    }
}

TEST_CASE("evaluation report", "[eval]")
{
    auto const world = fixtures::LineWorld(30, {});
    auto const targets = std::map<UserId, ItemId> { { 1, 10 }, { 2, 10 }, { 3, 29 }, { 4, 10 } };
    // answers at ranks 1, 6 and 30 (the far end of the line)
    auto const trajs = std::vector<Trajectory> {
        answered("1-0", 1, "Item 10"),
        answered("2-0", 2, "Item 13"),
        answered("3-0", 3, "Item 00"),
        invalid("4-0", 4),
    };
    auto const report = evaluate(trajs, *world.grounder, targets);
    CHECK(report.samples == 4);
    CHECK(report.misses == 1);
    REQUIRE(report.ranks.size() == 4);
    CHECK(report.ranks[0].rank == 1u);
    CHECK(report.ranks[1].rank == 6u);
    CHECK(report.ranks[2].rank == 30u);
    CHECK_FALSE(report.ranks[3].rank);

    auto const doc = to_json(report);
    CHECK(doc["metrics"]["HR@5"].get<double>() == 0.25);
    CHECK(doc["metrics"]["HR@10"].get<double>() == 0.5);
    CHECK_THAT(doc["metrics"]["NDCG@10"].get<double>(), WithinAbs(0.25 + (1.0 / std::log2(7.0)) / 4.0, 1e-12));
    CHECK(doc["ranks"][3]["rank"].is_null());
    CHECK(doc["samples"] == 4);

    CHECK_THROWS_AS(evaluate(trajs, *world.grounder, std::map<UserId, ItemId> { { 1, 10 } }), DataError);
}

TEST_CASE("grounding count against target difficulty", "[eval]")
{
    auto table = PopularityTable {};
    table.add(50, 2);  // difficulty 0.5
    table.add(60, 10); // difficulty 0.1
    auto const targets = std::map<UserId, ItemId> { { 1, 50 }, { 2, 50 }, { 3, 60 }, { 4, 99 }, { 5, 60 }, { 6, 50 } };

    auto aborted = answered("6-0", 6, "x", 5);
    aborted.status = EpisodeStatus::Aborted;
    auto const trajs = std::vector<Trajectory> {
        answered("1-0", 1, "x", 0),
        answered("2-0", 2, "x", 1),
        answered("3-0", 3, "x", 3),
        answered("4-0", 4, "x", 0), // target never seen in training
        answered("5-0", 5, "x", 9), // outside every bin
        aborted,
    };
    auto const report = analyze_difficulty(trajs, table, targets);
    REQUIRE(report.bins.size() == 3);
    CHECK(report.bins[0].label == "low");
    CHECK(report.bins[0].mean_difficulty == 0.5);
    CHECK(report.bins[0].samples == 2);
    CHECK(report.bins[0].unseen_excluded == 1);
    CHECK(report.bins[1].mean_difficulty == 0.1);
    CHECK(report.bins[1].samples == 1);
    CHECK_FALSE(report.bins[2].mean_difficulty);
    CHECK(report.bins[2].samples == 0);
    CHECK(report.unbinned == 1);

    auto const doc = to_json(report);
    CHECK(doc["bins"][2]["mean_difficulty"].is_null());
    CHECK(doc["bins"][1]["range"] == json::array({ 2, 4 }));

    auto const invalid_too = std::vector<Trajectory> { invalid("1-0", 1) };
    CHECK(analyze_difficulty(invalid_too, table, targets).bins[0].samples == 1);
}

TEST_CASE("grounding cap against target rank", "[eval]")
{
    auto const scenario = fixtures::RankCapScenario();
    auto const users = SimulatedUserAgentFactory(scenario.world.catalog);
    auto const env = scenario.world.env();
    auto base = RolloutConfig {};
    base.k_per_ground = 3;
    base.recall_size = 3;

    auto const caps = std::vector<std::size_t> { 1, 2 };
    auto const report = analyze_rank_vs_cap(scenario.sequences, scenario.policy, users, env, base, caps);
    REQUIRE(report.caps.size() == 2);
    CHECK(report.caps[0].mean_rank == 40.0);
    CHECK(report.caps[1].mean_rank == 2.0);
    CHECK(report.caps[0].samples == 1);

    auto const again = analyze_rank_vs_cap(scenario.sequences, scenario.policy, users, env, base, caps);
    CHECK(to_json(again).dump() == to_json(report).dump());

    auto const low_ceiling = analyze_rank_vs_cap(scenario.sequences, scenario.policy, users, env, base, caps, 10);
    CHECK(low_ceiling.caps[0].above_ceiling == 1);
    CHECK_FALSE(low_ceiling.caps[0].mean_rank);
    CHECK(low_ceiling.caps[1].mean_rank == 2.0);

    auto const unsorted = std::vector<std::size_t> { 2, 1 };
    CHECK_THROWS_AS(analyze_rank_vs_cap(scenario.sequences, scenario.policy, users, env, base, unsorted),
                    UsageError);
}
