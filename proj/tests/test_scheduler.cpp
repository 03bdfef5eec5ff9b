// Copyright (C) 2026 The loradrop authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "loradrop/scheduler.hpp"
#include "support.hpp"

using namespace loradrop;
using loradrop::testing::code_of;
using loradrop::testing::tiny_spec;

namespace {

Schedule make(std::set<std::size_t> drop, std::size_t k) {
    Schedule s;
    s.drop_set = std::move(drop);
    s.k = k;
    return s;
}

// Greedy decode by re-running prefill over the whole sequence at every step.
std::vector<TokenId> brute_force_greedy(const Model& m, std::vector<TokenId> seq, std::size_t steps) {
    std::vector<TokenId> out;
    TokenId next = argmax(prefill(m, seq, nullptr).logits.span());
    for (std::size_t t = 0; t < steps; ++t) {
        out.push_back(next);
        seq.push_back(next);
        next = argmax(prefill(m, seq, nullptr).logits.span());
    }
    return out;
}

}  // namespace

TEST_SUITE("scheduler") {
TEST_CASE("indicator examples") {
    const Schedule s = make({3, 4}, 3);
    CHECK(indicator(s, 8, 3, 4) == StepMode::Full);
    CHECK(indicator(s, 8, 3, 5) == StepMode::Lora);
    CHECK(indicator(s, 8, 5, 5) == StepMode::Full);
    CHECK(indicator(s, 8, 4, 0) == StepMode::Full);
    CHECK(code_of([&] { indicator(s, 8, 8, 1); }) == ErrorCode::kParameter);
}

TEST_CASE("indicator honours the phase origin") {
    Schedule s = make({3}, 2);
    s.phase_origin = 10;
    CHECK(indicator(s, 8, 3, 10) == StepMode::Full);
    CHECK(indicator(s, 8, 3, 11) == StepMode::Lora);
    CHECK(indicator(s, 8, 3, 12) == StepMode::Lora);
    CHECK(indicator(s, 8, 3, 13) == StepMode::Full);
    CHECK(code_of([&] { indicator(s, 8, 3, 9); }) == ErrorCode::kParameter);
}

TEST_CASE("k = 0 is always full") {
    const Schedule s = make({3, 4, 5, 6}, 0);
    for (std::size_t t = 0; t < 20; ++t)
        for (std::size_t l = 0; l < 8; ++l) CHECK(indicator(s, 8, l, t) == StepMode::Full);
}

TEST_CASE("drop ratio examples") {
    CHECK(drop_ratio(make({}, 3), 8) == 0.0);
    std::set<std::size_t> fourteen;
    for (std::size_t i = 3; i < 17; ++i) fourteen.insert(i);
    CHECK(drop_ratio(make(fourteen, 3), 32) == doctest::Approx(0.4375));
    CHECK(drop_ratio(make({3, 4, 5, 6}, 3), 8) == doctest::Approx(0.5));
}

TEST_CASE("schedule validation rejects protected and out-of-range layers") {
    CHECK(code_of([] { make({2}, 3).validate(8); }) == ErrorCode::kParameter);
    CHECK(code_of([] { make({7}, 3).validate(8); }) == ErrorCode::kParameter);
    CHECK(code_of([] { make({9}, 3).validate(8); }) == ErrorCode::kParameter);
    CHECK_NOTHROW(make({3, 6}, 3).validate(8));
    CHECK(make({}, 0).skippable_count(8) == 4);
    CHECK(make({}, 0).skippable_count(3) == 0);
}

TEST_CASE("refresh count is ceil(m / (k+1))") {
    for (std::size_t m = 0; m < 50; ++m)
        for (std::size_t k = 0; k < 8; ++k) {
            std::size_t expect = 0;
            for (std::size_t t = 0; t < m; ++t) expect += t % (k + 1) == 0;
            CHECK(refresh_count(m, k) == expect);
        }
}

TEST_CASE("empty drop set and k = 0 reproduce plain greedy decoding") {
    const Model m(tiny_spec(6, 5));
    const std::vector<TokenId> prompt{2, 9, 9, 14};
    const auto want = brute_force_greedy(m, prompt, 12);
    CHECK(decode(m, make({}, 3), prompt, 12).tokens == want);
    CHECK(decode(m, make({3, 4}, 0), prompt, 12).tokens == want);
}

TEST_CASE("one droppable layer with k = 3 over 8 steps") {
    const Model m(tiny_spec(6, 5));
    const std::vector<TokenId> prompt{1, 2, 3};
    const DecodeResult r = decode(m, make({3}, 3), prompt, 8);
    CHECK(r.stats.decode_entries(3) == 2);
    for (std::size_t l : {0, 1, 2, 4, 5}) CHECK(r.stats.decode_entries(l) == 8);
    CHECK(r.cache.positions(3) == std::vector<std::size_t>{0, 1, 2, 3, 7});
    CHECK(r.stats.all_full_steps() == 2);
    for (std::size_t t = 0; t < 8; ++t) {
        CHECK(r.stats.mode(t, 3) == (t % 4 == 0 ? StepMode::Full : StepMode::Lora));
        CHECK(r.stats.refresh[t] == (t % 4 == 0 ? 1 : 0));
    }
}

TEST_CASE("decode stats account every MAC") {
    const Model m(tiny_spec(6, 5));
    const std::vector<TokenId> prompt{7, 7, 7, 7, 7};
    const DecodeResult r = decode(m, make({3, 4}, 2), prompt, 9);
    const ModelSpec& s = m.spec();
    std::uint64_t lora = 0, full = 0;
    for (std::size_t t = 0; t < 9; ++t)
        for (std::size_t l = 0; l < 6; ++l) {
            if (r.stats.mode(t, l) == StepMode::Lora) {
                CHECK(r.stats.macs(t, l) == 2 * s.lora_rank * s.d_model);
                lora += r.stats.macs(t, l);
            } else {
                CHECK(r.stats.macs(t, l) == full_layer_macs(s, r.stats.cache_len_before[t * 6 + l]));
                full += r.stats.macs(t, l);
            }
        }
    CHECK(r.stats.lora_macs == lora);
    CHECK(r.stats.full_macs == full);
    CHECK(r.stats.layer_total_macs() == lora + full);
    CHECK(r.stats.head_macs == 9 * s.vocab_size * s.d_model);
}

TEST_CASE("zero adapters on the surrogate path reuse the previous output") {
    const Model m(tiny_spec(6, 5));
    const DecodeResult r = decode(m, make({3}, 5), std::vector<TokenId>{4, 4}, 4);
    // Steps 1..3 of layer 3 copied the step-0 output forward.
    CHECK(r.ledger.outputs[3].dim() == 16);
    const DecodeResult one = decode(m, make({3}, 5), std::vector<TokenId>{4, 4}, 1);
    CHECK(r.ledger.outputs[3] == one.ledger.outputs[3]);
}

TEST_CASE("forced tokens drive the decode") {
    const Model m(tiny_spec(6, 5));
    DecodeOptions o;
    o.forced_tokens = std::vector<TokenId>{5, 6, 7, 8};
    const DecodeResult r = decode(m, make({3}, 1), std::vector<TokenId>{1}, 4, o);
    CHECK(r.tokens == *o.forced_tokens);
    CHECK(r.logits.size() == 4);
    o.forced_tokens = std::vector<TokenId>{5};
    CHECK(code_of([&] { decode(m, make({}, 1), std::vector<TokenId>{1}, 4, o); }) == ErrorCode::kInput);
}

TEST_CASE("decode rejects bad requests") {
    const Model m(tiny_spec());
    CHECK(code_of([&] { decode(m, make({}, 1), std::vector<TokenId>{1}, 0); }) == ErrorCode::kInput);
    CHECK(code_of([&] { decode(m, make({}, 1), std::vector<TokenId>{}, 3); }) == ErrorCode::kInput);
    CHECK(code_of([&] { decode(m, make({0}, 1), std::vector<TokenId>{1}, 3); }) == ErrorCode::kParameter);
}

TEST_CASE("simulated cache writes match real decodes") {
    const Model m(tiny_spec(7, 8));
    for (std::size_t k : {0, 1, 2, 4}) {
        Schedule s = make({3, 5}, k);
        const DecodeResult r = decode(m, s, std::vector<TokenId>{1, 2}, 11);
        s.phase_origin = 0;
        const auto sim = simulate_cache_writes(s, 7, 11);
        for (std::size_t l = 0; l < 7; ++l) CHECK(sim[l] == r.stats.decode_entries(l));
    }
}

TEST_CASE("stats csv layout") {
    const Model m(tiny_spec());
    const DecodeResult r = decode(m, make({3}, 1), std::vector<TokenId>{1, 2}, 2);
    const std::string csv = r.stats.to_csv();
    CHECK(csv.rfind("step,layer,mode,macs,cache_entries\n", 0) == 0);
    CHECK(csv.find("\n1,3,lora,64,3\n") != std::string::npos);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 1 + 2 * 6);
}
}
