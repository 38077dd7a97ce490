#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "era/priors.hpp"
#include "era/rl.hpp"

using namespace era;

namespace {

std::vector<HouseTask> tasks6() { return house_task_suite(Split::Seen, 6, 17); }

}  // namespace

TEST_CASE("raw trajectory records parse and replay") {
    const auto& v = Vocabulary::standard();
    auto tasks = tasks6();
    ContextPolicy ctx{ContextKind::SelfSummarization, 1};
    auto corpus = record_raw_trajectories(v, EnvKind::House, tasks, {}, 4, 5, ctx);
    CHECK(corpus.size() > 10);
    auto report = validate_corpus(v, corpus, PriorKind::RawTraj);
    CHECK(report.ok());

    // Replaying the recorded actions reproduces each episode's success.
    nlohmann::json first = nlohmann::json::parse(corpus[0].json_line);
    HouseTask task = HouseTask::from_json(first["meta"]["task"].dump());
    uint64_t reset_seed = first["meta"]["reset_seed"].get<uint64_t>();
    auto [state, obs] = reset_house(v, task, reset_seed);
    bool done = false;
    TerminalKind term = TerminalKind::None;
    for (const auto& rec : corpus) {
        nlohmann::json j = nlohmann::json::parse(rec.json_line);
        if (j["episode"].get<int>() != 0) break;
        auto parsed = parse_response_text(v, j["generation"].get<std::string>(),
                                          ActionMode::HighLevel);
        REQUIRE(parse_ok(parsed));
        auto r = step_house(v, state, task,
                            std::get<HighLevelAction>(std::get<StructuredResponse>(parsed).action));
        CHECK(r.feedback.valid);
        state = r.state;
        done = r.done;
        term = r.terminal;
    }
    CHECK(done);
    CHECK(term == TerminalKind::Success);
}

TEST_CASE("augmented trajectories annotate every step") {
    const auto& v = Vocabulary::standard();
    auto manip = manip_task_suite(Split::Seen, 4, 31);
    ContextPolicy ctx{ContextKind::SelfSummarization, 1};
    Annotator rule{AnnotatorKind::RuleBased, "", ""};
    auto corpus = augment_trajectories(v, EnvKind::Table, {}, manip, 4, 9, ctx, rule);
    auto raw = record_raw_trajectories(v, EnvKind::Table, {}, manip, 4, 9, ctx);
    REQUIRE(corpus.size() == raw.size());  // step count preserved

    for (const auto& rec : corpus) {
        nlohmann::json j = nlohmann::json::parse(rec.json_line);
        auto parsed = parse_response_text(v, j["generation"].get<std::string>(),
                                          ActionMode::LowLevel);
        REQUIRE(parse_ok(parsed));
        const auto& resp = std::get<StructuredResponse>(parsed);
        CHECK(!resp.visual.empty());           // rule-based scene description
        CHECK(resp.reflection.has_value());    // reflection on every step
        CHECK(!resp.plan.empty());             // step-level plan
        // The visual field must match the live scene rendering.
        HouseTask unused;
        ManipTask task = ManipTask::from_json(j["meta"]["task"].dump());
        (void)unused;
        auto [state, obs] = reset_table(v, task, j["meta"]["reset_seed"].get<uint64_t>());
        if (j["step_id"].get<int>() == 0) {
            auto scene = ground_truth_scene(state);
            REQUIRE(resp.visual.size() == scene.size());
            for (size_t i = 0; i < scene.size(); ++i) {
                CHECK(resp.visual[i].color == scene[i].color);
                CHECK(resp.visual[i].shape == scene[i].shape);
                CHECK(resp.visual[i].coord == scene[i].coord);
            }
        }
    }
}

TEST_CASE("external annotator requires a response file") {
    const auto& v = Vocabulary::standard();
    auto manip = manip_task_suite(Split::Seen, 2, 31);
    ContextPolicy ctx{ContextKind::SelfSummarization, 1};
    Annotator ext{AnnotatorKind::External, "", "/nonexistent/responses.jsonl"};
    CHECK_THROWS_AS(augment_trajectories(v, EnvKind::Table, {}, manip, 1, 1, ctx, ext),
                    AnnotatorUnavailableError);
}

TEST_CASE("masked samples reconstruct the original sequence") {
    std::mt19937_64 rng(5);
    std::vector<std::string> actions = {"find a Plate", "pick up the Plate",
                                        "find a DiningTable", "put down the object in hand"};
    for (int i = 0; i < 200; ++i) {
        auto s = gen_masked_action("Put a Plate in the DiningTable", actions, rng);
        REQUIRE(s.mask_index >= 0);
        REQUIRE(s.mask_index < static_cast<int>(actions.size()));
        CHECK(s.masked_action == actions[static_cast<size_t>(s.mask_index)]);
        CHECK(s.query.find("[MASK]") != std::string::npos);
        // Reinsert.
        std::string rebuilt = s.query;
        auto pos = rebuilt.find("[MASK]");
        rebuilt.replace(pos, 6, s.masked_action);
        for (const auto& a : actions) CHECK(rebuilt.find(a) != std::string::npos);
    }
    // Single-action sequence forces mask index 0.
    auto one = gen_masked_action("x", {"find a Plate"}, rng);
    CHECK(one.mask_index == 0);
}

TEST_CASE("mask indices are close to uniform over many draws") {
    std::mt19937_64 rng(7);
    std::vector<std::string> actions(5, "a");
    for (int i = 0; i < 5; ++i) actions[static_cast<size_t>(i)] = "act" + std::to_string(i);
    std::vector<int> counts(5, 0);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i)
        counts[static_cast<size_t>(gen_masked_action("t", actions, rng).mask_index)]++;
    // Chi-squared against uniform with 4 dof; 18.47 is the 0.1% tail.
    double chi2 = 0.0;
    const double expect = draws / 5.0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < 18.47);
}

TEST_CASE("reorder answers are true permutations recovering the original") {
    std::mt19937_64 rng(11);
    std::vector<std::string> actions = {"find an Apple", "pick up the Apple", "find a Fridge",
                                        "open the Fridge", "put down the object in hand"};
    int identity_count = 0;
    for (int i = 0; i < 300; ++i) {
        auto s = gen_reorder("Put an Apple in the Fridge", actions, rng);
        std::vector<int> sorted = s.permutation;
        std::sort(sorted.begin(), sorted.end());
        for (size_t k = 0; k < sorted.size(); ++k) CHECK(sorted[k] == static_cast<int>(k));
        bool identity = std::is_sorted(s.permutation.begin(), s.permutation.end());
        identity_count += identity ? 1 : 0;
    }
    CHECK(identity_count == 0);  // resampled away for len > 2

    // Two-action sequences may keep the identity; the swap round-trips.
    std::vector<std::string> two = {"find a Plate", "pick up the Plate"};
    auto s = gen_reorder("t", two, rng);
    CHECK(s.permutation.size() == 2);
}

TEST_CASE("grounding QA matches the scene") {
    const auto& v = Vocabulary::standard();
    auto manip = manip_task_suite(Split::Seen, 3, 41);
    auto [state, obs] = reset_table(v, manip[0], 3);
    auto scene = ground_truth_scene(state);
    std::mt19937_64 rng(13);

    auto abs = gen_grounding(state, GroundingKind::Absolute, rng);
    REQUIRE(abs.size() == 2);
    CHECK(abs[0].question.find("What is the 3D coordinate of the ") == 0);
    CHECK(abs[1].question.find("What object is located at ") == 0);
    CHECK(abs[1].answer.find("The ") == 0);

    auto rel = gen_grounding(state, GroundingKind::Relative, rng);
    REQUIRE(rel.size() == scene.size());
    CHECK(rel[0].question == "What is the 3D location of the leftmost object?");
    std::string leftmost = "[" + std::to_string(scene[0].coord[0]) + ", " +
                           std::to_string(scene[0].coord[1]) + ", " +
                           std::to_string(scene[0].coord[2]) + "]";
    CHECK(rel[0].answer == leftmost);
    CHECK(rel.back().question == "What is the 3D location of the rightmost object?");

    // Relative answers agree with absolute coordinates: the leftmost object's
    // coordinate equals its own entry.
    auto comb = gen_grounding(state, GroundingKind::Combined, rng);
    REQUIRE(comb.size() == 2);
    CHECK(comb[0].answer == "Yes");
    CHECK(comb[1].answer == "No");

    // Single-object scene: leftmost == rightmost.
    TableState single;
    single.objects.push_back(state.objects[0]);
    auto rel1 = gen_grounding(single, GroundingKind::Relative, rng);
    REQUIRE(rel1.size() == 1);
    CHECK(rel1[0].question == "What is the 3D location of the rightmost object?");
}

TEST_CASE("alfred mapping reproduces the published sequences byte-exactly") {
    AlfredContext ctx;
    auto clean = map_alfred_action({AlfredVerb::CleanObject, "soapbar", ""}, ctx);
    std::vector<std::string> want_clean = {
        "put down the object in hand", "find a Faucet",   "turn on the Faucet",
        "turn off the Faucet",         "find a soapbar",  "pick up the soapbar"};
    CHECK(clean == want_clean);

    auto cool = map_alfred_action({AlfredVerb::CoolObject, "apple", ""}, ctx);
    std::vector<std::string> want_cool = {
        "open the Fridge", "put down the object in hand", "close the Fridge",
        "open the Fridge", "find an apple",               "pick up the apple",
        "close the Fridge"};
    CHECK(cool == want_cool);

    auto heat = map_alfred_action({AlfredVerb::HeatObject, "potato", ""}, ctx);
    std::vector<std::string> want_heat = {
        "open the Microwave",    "put down the object in hand", "close the Microwave",
        "turn on the Microwave", "turn off the Microwave",      "open the Microwave",
        "find a potato",         "pick up the potato",          "close the Microwave"};
    CHECK(heat == want_heat);

    auto put_fridge = map_alfred_action({AlfredVerb::PutObject, "apple", "Fridge"}, ctx);
    CHECK(put_fridge ==
          std::vector<std::string>{"open the Fridge", "put down the object in hand"});
    auto put_table = map_alfred_action({AlfredVerb::PutObject, "apple", "DiningTable"}, ctx);
    CHECK(put_table == std::vector<std::string>{"put down the object in hand"});

    CHECK(map_alfred_action({AlfredVerb::NoOp, "", ""}, ctx).empty());
    CHECK(map_alfred_action({AlfredVerb::GotoLocation, "", "armchair"}, ctx) ==
          std::vector<std::string>{"find an armchair"});

    // Stateful toggling alternates.
    AlfredContext tctx;
    CHECK(map_alfred_action({AlfredVerb::ToggleObject, "FloorLamp", ""}, tctx) ==
          std::vector<std::string>{"turn on the FloorLamp"});
    CHECK(map_alfred_action({AlfredVerb::ToggleObject, "FloorLamp", ""}, tctx) ==
          std::vector<std::string>{"turn off the FloorLamp"});
}

TEST_CASE("mapped sequences execute with full validity in context states") {
    const auto& v = Vocabulary::standard();
    std::vector<AlfredAction> actions = {
        {AlfredVerb::CleanObject, "Apple", ""},    {AlfredVerb::CoolObject, "Apple", ""},
        {AlfredVerb::HeatObject, "Potato", ""},    {AlfredVerb::PutObject, "Apple", "Fridge"},
        {AlfredVerb::PutObject, "Mug", "Shelf"},   {AlfredVerb::GotoLocation, "", "Fridge"},
        {AlfredVerb::PickupObject, "Plate", ""},   {AlfredVerb::SliceObject, "Bread", ""},
        {AlfredVerb::ToggleObject, "Faucet", ""},  {AlfredVerb::NoOp, "", ""},
    };
    for (const auto& a : actions) {
        AlfredContext ctx;
        auto phrases = map_alfred_action(a, ctx);
        std::string why;
        CHECK_MESSAGE(mapped_sequence_executes(v, a, phrases, &why), why);
    }
}

TEST_CASE("rule-based descriptions match the recorded fixture pattern") {
    TableState s;
    auto add = [&](const char* name, const char* real, std::array<double, 3> rgb, Shape shape,
                   std::array<int, 3> coord, bool container) {
        TableObject o;
        o.name = name;
        o.real_name = real;
        o.rgb = rgb;
        o.shape = shape;
        o.coord = coord;
        o.container = container;
        s.objects.push_back(o);
    };
    add("Shape_1", "small star", {1.0, 0.65, 0.0}, Shape::Star, {57, 74, 17}, false);
    add("Shape_2", "big cube", {0.0, 0.5, 0.5}, Shape::Cube, {66, 38, 18}, false);
    add("Shape_3", "small container", {0.75, 0.75, 0.75}, Shape::Container, {33, 43, 17}, true);
    auto text = gen_visual_description(s);
    CHECK(text ==
          "From left to right, I can see a teal cube at [66, 38, 18], a silver container at "
          "[33, 43, 17], and an orange star at [57, 74, 17].");

    // Exceptions keep the full real name.
    TableState s2;
    add("Shape_1", "sponge", {1.0, 1.0, 0.0}, Shape::Sponge, {50, 20, 17}, false);
    s2.objects.push_back(s.objects.back());
    std::swap(s2.objects, s.objects);
    // rebuild: single sponge scene
    TableState s3;
    TableObject sponge;
    sponge.name = "Shape_1";
    sponge.real_name = "sponge";
    sponge.rgb = {1.0, 1.0, 0.0};
    sponge.shape = Shape::Sponge;
    sponge.coord = {50, 20, 17};
    s3.objects.push_back(sponge);
    CHECK(gen_visual_description(s3) ==
          "From left to right, I can see a yellow sponge at [50, 20, 17].");

    TableState s4;
    TableObject sorter;
    sorter.name = "Shape_1";
    sorter.real_name = "shape sorter";
    sorter.rgb = {0.0, 0.5, 0.0};
    sorter.shape = Shape::ShapeSorter;
    sorter.coord = {40, 60, 17};
    s4.objects.push_back(sorter);
    CHECK(gen_visual_description(s4) ==
          "From left to right, I can see a green shape sorter at [40, 60, 17].");
}

TEST_CASE("rule-based descriptions agree with scene rendering on generated states") {
    const auto& v = Vocabulary::standard();
    for (const auto& task : manip_task_suite(Split::Seen, 10, 91)) {
        auto [state, obs] = reset_table(v, task, task.seed);
        auto scene = ground_truth_scene(state);
        StructuredResponse resp;
        for (const auto& e : scene) resp.visual.push_back(VisualEntry{e.color, e.shape, e.coord});
        resp.action = LowLevelAction{{0, 0, 0, 0, 0, 0, 1}};
        std::string think = render_think_text(v, resp);
        std::string want = "visual_description: " + gen_visual_description(state);
        CHECK(think.substr(0, want.size()) == want);
    }
}

TEST_CASE("external adapter validates records and preserves counts") {
    const char* path = "external_test.jsonl";
    {
        std::ofstream out(path);
        out << R"({"prompt": "Q1", "response": "A1"})" << "\n";
        out << R"({"prompt": "Q2", "response": "A2"})" << "\n";
    }
    auto corpus = external_prior_adapter(path);
    CHECK(corpus.size() == 2);
    auto report = validate_corpus(Vocabulary::standard(), corpus, PriorKind::ExternalStub);
    CHECK(report.ok());

    {
        std::ofstream out(path);
        out << R"({"prompt": "Q1"})" << "\n";
    }
    CHECK_THROWS_AS(external_prior_adapter(path), SchemaError);
    std::remove(path);
}

TEST_CASE("corpora survive the jsonl round trip") {
    const auto& v = Vocabulary::standard();
    auto tasks = tasks6();
    auto corpus = gen_masked_corpus(v, tasks, 8, 3);
    const char* path = "masked_test.jsonl";
    write_corpus_jsonl(corpus, path);
    auto loaded = load_corpus_jsonl(v, path);
    REQUIRE(loaded.size() == corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        CHECK(loaded[i].kind == corpus[i].kind);
        CHECK(loaded[i].sample.prompt == corpus[i].sample.prompt);
        CHECK(loaded[i].sample.target == corpus[i].sample.target);
    }
    std::remove(path);

    // Corrupted records are flagged, empty corpora give empty reports.
    PriorCorpus bad = corpus;
    nlohmann::json j = nlohmann::json::parse(bad[0].json_line);
    j["meta"]["mask_index"] = 99;
    bad[0].json_line = j.dump();
    auto report = validate_corpus(v, bad, PriorKind::MaskedAction);
    CHECK(report.failures.size() == 1);
    CHECK(validate_corpus(v, {}, PriorKind::MaskedAction).ok());
}
