#include <doctest.h>

#include <random>

#include "era/response.hpp"
#include "era/vocab.hpp"

using namespace era;

TEST_CASE("vocabulary round-trips id -> surface -> id") {
    const auto& v = Vocabulary::standard();
    for (TokenId id = 0; id < v.size(); ++id) {
        auto back = v.find(v.surface(id));
        REQUIRE(back.has_value());
        CHECK(*back == id);
    }
}

TEST_CASE("tag tokens exist with exact surfaces") {
    const auto& v = Vocabulary::standard();
    CHECK(v.surface(v.think_start()) == "<|think_start|>");
    CHECK(v.surface(v.think_end()) == "<|think_end|>");
    CHECK(v.surface(v.action_start()) == "<|action_start|>");
    CHECK(v.surface(v.action_end()) == "<|action_end|>");
}

TEST_CASE("vocabulary survives json serialization") {
    const auto& v = Vocabulary::standard();
    auto v2 = Vocabulary::from_json(v.to_json());
    REQUIRE(v2.size() == v.size());
    for (TokenId id = 0; id < v.size(); ++id) {
        CHECK(v2.surface(id) == v.surface(id));
        CHECK(v2.cls(id) == v.cls(id));
    }
    REQUIRE(v2.skills().size() == v.skills().size());
    CHECK(v2.skill_by_id(31)->phrase == v.skill_by_id(31)->phrase);
}

TEST_CASE("pinned skill ids match recorded fixtures") {
    const auto& v = Vocabulary::standard();
    CHECK(v.skill_by_id(18)->phrase == "find a DiningTable");
    CHECK(v.skill_by_id(19)->phrase == "find a Spoon");
    CHECK(v.skill_by_id(31)->phrase == "find a Plate");
    CHECK(v.skill_by_id(105)->phrase == "pick up the Spoon");
    CHECK(v.skill_by_id(122)->phrase == "pick up the Plate");
    CHECK(v.skill_by_id(133)->phrase == "put down the object in hand");
    // Every phrase maps back to its id.
    for (const auto& s : v.skills()) CHECK(v.skill_by_phrase(s.phrase)->skill_id == s.skill_id);
}

TEST_CASE("empty think block around a find action") {
    const auto& v = Vocabulary::standard();
    StructuredResponse resp;
    resp.action = HighLevelAction{31, "find a Plate"};
    CHECK(render_response_text(v, resp) ==
          "<|think_start|><|think_end|><|action_start|>[31, 'find a Plate']<|action_end|>");

    TokenSeq toks = encode_response(v, resp);
    REQUIRE(toks.size() == 5);  // two tag pairs plus one skill token
    auto decoded = decode_response(v, toks, ActionMode::HighLevel);
    REQUIRE(parse_ok(decoded));
    CHECK(std::get<StructuredResponse>(decoded) == resp);
}

TEST_CASE("low-level action encodes to seven slot tokens") {
    const auto& v = Vocabulary::standard();
    StructuredResponse resp;
    resp.action = LowLevelAction{{57, 74, 27, 0, 60, 90, 1}};
    TokenSeq toks = encode_response(v, resp);
    REQUIRE(toks.size() == 4 + 7);
    // Slot order preserved.
    const auto& lo = std::get<LowLevelAction>(resp.action);
    for (int i = 0; i < 7; ++i)
        CHECK(v.int_value(toks[static_cast<size_t>(3 + i)]) == lo.v[static_cast<size_t>(i)]);
    CHECK(render_action_text(v, resp.action) == "[57, 74, 27, 0, 60, 90, 1]");
}

namespace {

StructuredResponse random_response(std::mt19937_64& rng, ActionMode mode) {
    const auto& v = Vocabulary::standard();
    StructuredResponse resp;
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> n_vis(0, 3);
    std::uniform_int_distribution<int> color(0, kNumColors - 1);
    std::uniform_int_distribution<int> shape(0, kNumShapes - 1);
    std::uniform_int_distribution<int> coord(0, 100);
    int nv = mode == ActionMode::LowLevel ? n_vis(rng) : 0;
    for (int i = 0; i < nv; ++i) {
        VisualEntry e;
        e.color = color(rng);
        e.shape = static_cast<Shape>(shape(rng));
        e.coord = {coord(rng), coord(rng), coord(rng)};
        resp.visual.push_back(e);
    }
    if (coin(rng)) {
        std::uniform_int_distribution<int> refl(0, kNumReflections - 1);
        resp.reflection = Reflection::from_symbol_index(refl(rng));
    }
    std::uniform_int_distribution<int> n_plan(0, 3);
    int np = n_plan(rng);
    for (int i = 0; i < np; ++i) {
        // A plan step: verb plus a name.
        resp.plan.push_back(v.require("find"));
        std::uniform_int_distribution<size_t> name(0, house_catalog().size() - 1);
        resp.plan.push_back(v.require(std::string(house_catalog()[name(rng)].name)));
    }
    if (mode == ActionMode::HighLevel) {
        std::uniform_int_distribution<size_t> skill(0, v.skills().size() - 1);
        const auto& s = v.skills()[skill(rng)];
        resp.action = HighLevelAction{s.skill_id, s.phrase};
    } else {
        std::uniform_int_distribution<int> ori(0, 120);
        resp.action = LowLevelAction{
            {coord(rng), coord(rng), coord(rng), ori(rng), ori(rng), ori(rng), coin(rng)}};
    }
    return resp;
}

}  // namespace

TEST_CASE("token round-trip holds for random valid responses") {
    const auto& v = Vocabulary::standard();
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        ActionMode mode = (i % 2 == 0) ? ActionMode::HighLevel : ActionMode::LowLevel;
        auto resp = random_response(rng, mode);
        auto decoded = decode_response(v, encode_response(v, resp), mode);
        REQUIRE(parse_ok(decoded));
        CHECK(std::get<StructuredResponse>(decoded) == resp);
    }
}

TEST_CASE("text round-trip holds for random valid responses") {
    const auto& v = Vocabulary::standard();
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        ActionMode mode = (i % 2 == 0) ? ActionMode::HighLevel : ActionMode::LowLevel;
        auto resp = random_response(rng, mode);
        auto decoded = parse_response_text(v, render_response_text(v, resp), mode);
        REQUIRE(parse_ok(decoded));
        CHECK(std::get<StructuredResponse>(decoded) == resp);
    }
}

TEST_CASE("decode failures are values, not aborts") {
    const auto& v = Vocabulary::standard();
    StructuredResponse resp;
    resp.action = LowLevelAction{{1, 2, 3, 4, 5, 6, 1}};
    TokenSeq toks = encode_response(v, resp);

    SUBCASE("missing action-end") {
        toks.pop_back();
        auto r = decode_response(v, toks, ActionMode::LowLevel);
        REQUIRE(!parse_ok(r));
        CHECK(std::get<ParseFailure>(r).error == ParseError::UnclosedAction);
    }
    SUBCASE("six numbers in low-level mode") {
        toks.erase(toks.end() - 2);
        auto r = decode_response(v, toks, ActionMode::LowLevel);
        REQUIRE(!parse_ok(r));
        CHECK(std::get<ParseFailure>(r).error == ParseError::BadArity);
    }
    SUBCASE("missing think-start") {
        TokenSeq bad(toks.begin() + 1, toks.end());
        auto r = decode_response(v, bad, ActionMode::LowLevel);
        REQUIRE(!parse_ok(r));
        CHECK(std::get<ParseFailure>(r).error == ParseError::MissingThinkStart);
    }
}

TEST_CASE("decode is total over arbitrary token sequences") {
    const auto& v = Vocabulary::standard();
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> len(0, 40);
    std::uniform_int_distribution<TokenId> tok(-2, v.size() + 2);
    for (int i = 0; i < 20000; ++i) {
        TokenSeq seq;
        int n = len(rng);
        for (int j = 0; j < n; ++j) seq.push_back(tok(rng));
        ActionMode mode = (i % 2 == 0) ? ActionMode::HighLevel : ActionMode::LowLevel;
        auto r = decode_response(v, seq, mode);  // must not throw
        if (parse_ok(r)) {
            // Anything that decodes must re-encode to the same tokens.
            CHECK(encode_response(v, std::get<StructuredResponse>(r)) == seq);
        }
    }
}

TEST_CASE("count_tokens is additive and zero on empty") {
    CHECK(count_tokens({}) == 0);
    TokenSeq a = {1, 2, 3};
    TokenSeq b = {4, 5};
    TokenSeq ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    CHECK(count_tokens(ab) == count_tokens(a) + count_tokens(b));
}

TEST_CASE("plate example token count is frozen for this vocabulary version") {
    const auto& v = Vocabulary::standard();
    StructuredResponse resp;
    resp.action = HighLevelAction{31, "find a Plate"};
    CHECK(count_tokens(encode_response(v, resp)) == 5);
}

TEST_CASE("color classification uses nearest palette entry") {
    CHECK(color_name(classify_color({1.0, 0.0, 0.0})) == "red");
    CHECK(color_name(classify_color({0.9, 0.1, 0.1})) == "red");
    CHECK(color_name(classify_color({0.0, 0.5, 0.5})) == "teal");
    CHECK(color_name(classify_color({1.0, 0.65, 0.0})) == "orange");
}
