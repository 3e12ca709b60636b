#include <gtest/gtest.h>

#include <map>
#include <set>

#include "locedit/dataset.hpp"
#include "locedit/image_io.hpp"
#include "locedit/shapes_world.hpp"
#include "locedit/text.hpp"
#include "support.hpp"

using namespace locedit;
namespace sw = locedit::shapes;
using locedit::testing::TempDir;

namespace {

Lexicon vehicle_lexicon() {
  Lexicon lex;
  lex.pos = {{"bus", PartOfSpeech::kNoun},   {"train", PartOfSpeech::kNoun},      {"blue", PartOfSpeech::kAdjective},
             {"orange", PartOfSpeech::kAdjective}, {"white", PartOfSpeech::kAdjective}, {"background", PartOfSpeech::kOther}};
  lex.cohyponyms = {{"bus", {"train"}}, {"train", {"bus"}}};
  return lex;
}

Embedding unit(std::vector<double> v) { return normalized(std::move(v)); }

Embedding random_unit(Rng& rng, int dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return normalized(std::move(v));
}

std::string brute_force(const Embedding& q, const EmbeddingIndex& index, const std::string& exclude) {
  std::string best;
  double best_sim = -10.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index.ids()[i] == exclude) continue;
    const double s = cosine(q, index.row(i));
    if (s > best_sim || (s == best_sim && index.ids()[i] < best)) {
      best_sim = s;
      best = index.ids()[i];
    }
  }
  return best;
}

std::vector<CaptionedImage> corpus_from(const std::vector<sw::Record>& world, bool with_captions) {
  std::vector<CaptionedImage> out;
  for (const auto& r : world) out.push_back({r.id, r.image, with_captions ? r.attributes.caption() : ""});
  return out;
}

int differing_tokens(const std::string& a, const std::string& b) {
  const auto ta = split_tokens(a);
  const auto tb = split_tokens(b);
  if (ta.size() != tb.size()) return -1;
  int n = 0;
  for (std::size_t i = 0; i < ta.size(); ++i) n += ta[i] != tb[i];
  return n;
}

}  // namespace

TEST(Mutate, NounSubstitutionFromLexicon) {
  const std::string caption = "a blue and orange bus on white background";
  // Only "bus" is eligible: the adjectives have no substitutes in this lexicon.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = mutate_prompt(caption, vehicle_lexicon(), seed);
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(m->edit_prompt, "a blue and orange train on white background");
    EXPECT_EQ(m->diff_source, "bus");
    EXPECT_EQ(m->diff_target, "train");
    EXPECT_EQ(m->replaced_pos, PartOfSpeech::kNoun);
  }
}

TEST(Mutate, AdjectiveDiffPromptsIncludeGovernedNoun) {
  Lexicon lex = sw::shapes_lexicon();
  // Restrict to the colour word by removing shape substitutes and the background word.
  lex.cohyponyms.erase("square");
  lex.antonyms.erase("white");
  lex.cohyponyms.erase("white");
  lex.cohyponyms["red"] = {"blue"};
  const auto m = mutate_prompt("a red square on a white background", lex, 1);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->edit_prompt, "a blue square on a white background");
  EXPECT_EQ(m->diff_source, "red square");
  EXPECT_EQ(m->diff_target, "blue square");
  EXPECT_EQ(m->replaced_pos, PartOfSpeech::kAdjective);
}

TEST(Mutate, AdjectivePrefersAntonym) {
  Lexicon lex;
  lex.pos = {{"big", PartOfSpeech::kAdjective}, {"dog", PartOfSpeech::kNoun}};
  lex.antonyms = {{"big", {"small"}}};
  lex.cohyponyms = {{"big", {"huge", "large"}}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = mutate_prompt("a big dog", lex, seed);
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(m->replacement_word, "small");
    EXPECT_EQ(m->diff_target, "small dog");
  }
}

TEST(Mutate, NoCandidate) {
  EXPECT_FALSE(mutate_prompt("the of and with", sw::shapes_lexicon(), 0).has_value());
  EXPECT_FALSE(mutate_prompt("", sw::shapes_lexicon(), 0).has_value());
}

TEST(Mutate, KeepsPunctuationAroundReplacedWord) {
  const auto m = mutate_prompt("look, a bus!", vehicle_lexicon(), 0);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->edit_prompt, "look, a train!");
}

// Exactly one token changes and the inverse substitution restores the caption.
TEST(MutateProperty, OneTokenAndInvertible) {
  const Lexicon lex = sw::shapes_lexicon();
  for (const auto& r : sw::make_shapes_world(4, 60, 32)) {
    const std::string caption = r.attributes.caption();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto m = mutate_prompt(caption, lex, derive_seed(seed, r.id));
      ASSERT_TRUE(m.has_value());
      EXPECT_EQ(differing_tokens(caption, m->edit_prompt), 1);
      auto tokens = split_tokens(m->edit_prompt);
      tokens[m->token_index] = m->replaced_word;
      EXPECT_EQ(join_tokens(tokens), caption);
      EXPECT_NE(m->diff_target.find(m->replacement_word), std::string::npos);
      EXPECT_FALSE(m->diff_source.empty());
    }
  }
}

TEST(MutateProperty, SelectionIsSpreadOverEligibleTokens) {
  // "red", "square" and "white" are all eligible in the shapes lexicon.
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 3000; ++seed) {
    counts[mutate_prompt("a red square on a white background", sw::shapes_lexicon(), seed)->replaced_word]++;
  }
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [w, n] : counts) EXPECT_NEAR(n, 1000, 100) << w;
}

TEST(Query, MeanOfEmbeddings) {
  struct Fixed : ImageTextEmbedder {
    Embedding img, txt;
    std::string name() const override { return "fixed"; }
    Embedding embed_image(const Image&) const override { return img; }
    Embedding embed_text(const std::string&) const override { return txt; }
    Image embed_image_vjp(const Image& i, std::span<const double>) const override { return i; }
  } e;
  const Image any(Shape{3, 8, 8});
  e.img = e.txt = unit({0.6, 0.8, 0});
  EXPECT_EQ(query_embedding(any, "x", e).values, e.img.values);
  e.img = unit({1, 0, 0});
  e.txt = unit({0, 1, 0});
  const auto q = query_embedding(any, "x", e);
  EXPECT_NEAR(q.values[0], 1 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(q.values[1], 1 / std::sqrt(2.0), 1e-15);
  e.txt = unit({-1, 0, 0});
  EXPECT_THROW(query_embedding(any, "x", e), DegenerateQueryError);
}

TEST(Retrieval, Examples) {
  EmbeddingIndex index;
  index.add("v0", unit({1, 0, 0}));
  index.add("v1", unit({0, 1, 0}));
  index.add("v2", unit({0, 0, 1}));
  EXPECT_EQ(retrieve_pseudo_target(unit({0, 0, 1}), index, "v0"), "v2");
  // Query equal to the excluded source's own row.
  EXPECT_EQ(retrieve_pseudo_target(unit({1, 0, 0}), index, "v0"), brute_force(unit({1, 0, 0}), index, "v0"));
  EmbeddingIndex tie;
  tie.add("b", unit({1, 0}));
  tie.add("a", unit({1, 0}));
  tie.add("c", unit({0, 1}));
  EXPECT_EQ(retrieve_pseudo_target(unit({1, 0}), tie, "zzz"), "a");
  EmbeddingIndex single;
  single.add("only", unit({1, 0}));
  EXPECT_THROW(retrieve_pseudo_target(unit({1, 0}), single, "only"), RetrievalError);
  EXPECT_THROW(single.add("bad", Embedding{{2.0, 0.0}}), ParameterError);
}

TEST(RetrievalProperty, MatchesBruteForce) {
  Rng rng(17);
  EmbeddingIndex index;
  for (int i = 0; i < 300; ++i) index.add("id" + std::to_string(1000 + i), random_unit(rng, 12));
  // Duplicate a few rows under other ids to exercise ties.
  for (int i = 0; i < 20; ++i) index.add("dup" + std::to_string(i), index.row(i * 7));
  for (int k = 0; k < 1000; ++k) {
    const Embedding q = k % 10 == 0 ? index.row(rng.uniform_int(0, 319)) : random_unit(rng, 12);
    const std::string exclude = index.ids()[rng.uniform_int(0, 319)];
    EXPECT_EQ(retrieve_pseudo_target(q, index, exclude), brute_force(q, index, exclude));
  }
}

TEST(Build, ManifestKeysPathsAndInvariants) {
  TempDir dir("build");
  const auto world = sw::make_shapes_world(3, 50, 32);
  const auto s = build_dataset(corpus_from(world, false), make_providers({}), sw::shapes_lexicon(), {3, 0.5}, dir.path());
  ASSERT_GT(s.n_built, 0);
  EXPECT_EQ(s.n_built + s.n_skipped(), 50);
  const auto lines = locedit::testing::slurp(s.manifest_path);
  const std::vector<std::string> keys{"id",          "source_path",      "target_path",      "source_caption",
                                      "edit_prompt", "diff_source",      "diff_target",      "source_mask_path",
                                      "target_mask_path", "replaced_word", "replacement_word", "replaced_pos"};
  std::istringstream in(lines);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::ordered_json::parse(line);
    std::vector<std::string> got;
    for (const auto& [k, _] : j.items()) got.push_back(k);
    EXPECT_EQ(got, keys);
    EXPECT_NE(j["source_path"], j["target_path"]);
    EXPECT_EQ(differing_tokens(j["source_caption"], j["edit_prompt"]), 1);
    EXPECT_NE(j["diff_target"].get<std::string>().find(j["replacement_word"].get<std::string>()), std::string::npos);
    for (const char* k : {"source_path", "target_path", "source_mask_path", "target_mask_path"}) {
      EXPECT_TRUE(std::filesystem::exists(dir.path() / j[k].get<std::string>())) << k;
    }
    ++n;
  }
  EXPECT_EQ(n, s.n_built);
  const auto entries = read_manifest(s.manifest_path);
  ASSERT_EQ(static_cast<int>(entries.size()), s.n_built);
  EXPECT_EQ(read_png_mask(entries[0].source_mask_path).data, s.triplets[0].source_mask.data);
}

TEST(Build, RebuildIsByteIdentical) {
  TempDir a("build_a"), b("build_b");
  const auto world = sw::make_shapes_world(3, 50, 32);
  build_dataset(corpus_from(world, true), make_providers({}), sw::shapes_lexicon(), {3, 0.5}, a.path());
  build_dataset(corpus_from(world, true), make_providers({}), sw::shapes_lexicon(), {3, 0.5}, b.path());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a.path());
    EXPECT_EQ(locedit::testing::slurp(e.path()), locedit::testing::slurp(b.path() / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10u);
}

TEST(Build, TwoIdenticalImagesRetrieveEachOther) {
  TempDir dir("build_pair");
  const Image img = sw::render(sw::centered(0, 0, 0, 32), 32);
  const auto s =
      build_dataset({{"x1", img, ""}, {"x2", img, ""}}, make_providers({}), sw::shapes_lexicon(), {5, 0.5}, dir.path());
  for (const auto& t : s.triplets) EXPECT_EQ(t.target_id, t.source_id == "x1" ? "x2" : "x1");
}

TEST(Build, SingleImageCorpusSkipsEverything) {
  TempDir dir("build_single");
  const Image img = sw::render(sw::centered(1, 2, 1, 32), 32);
  const auto s = build_dataset({{"only", img, ""}}, make_providers({}), sw::shapes_lexicon(), {0, 0.5}, dir.path());
  EXPECT_EQ(s.n_built, 0);
  EXPECT_EQ(s.n_skipped(), 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.jsonl"));
}

TEST(Build, NoCandidateAndDuplicateIds) {
  TempDir dir("build_misc");
  const Image img = sw::render(sw::centered(1, 2, 1, 32), 32);
  const auto s = build_dataset({{"a", img, "nothing to change"}, {"b", img, "still nothing"}}, make_providers({}),
                               sw::shapes_lexicon(), {0, 0.5}, dir.path());
  EXPECT_EQ(s.skipped.at("no_candidate"), 2);
  EXPECT_THROW(build_dataset({{"a", img, ""}, {"a", img, ""}}, make_providers({}), sw::shapes_lexicon(), {}, dir.path()),
               ParameterError);
}

// With the exact 2-hot oracle, the mean query for red square -> "blue square" scores a red
// square and a blue square equally (both share one axis with each half of the query), so the
// retrieved target is one of the two attribute combinations, chosen by the id tie-break. When
// no other red square exists, the target is a blue square.
TEST(Build, ColourEditRetrievesSourceOrTargetAttributes) {
  const auto world = sw::make_shapes_world(9, 120, 32);
  std::map<std::string, sw::Attributes> attrs;
  for (const auto& r : world) attrs[r.id] = r.attributes;
  TempDir dir("build_retrieval");
  const auto s = build_dataset(corpus_from(world, true), make_providers({}), sw::shapes_lexicon(), {2, 0.5}, dir.path());
  int colour_edits = 0;
  for (const auto& t : s.triplets) {
    if (t.mutation.replaced_pos != PartOfSpeech::kAdjective) continue;
    const auto new_colour = sw::color_index(t.mutation.replacement_word);
    if (!new_colour) continue;
    const auto& src = attrs.at(t.source_id);
    const auto& tgt = attrs.at(t.target_id);
    EXPECT_EQ(tgt.shape, src.shape) << t.id;
    EXPECT_TRUE(tgt.color == src.color || tgt.color == *new_colour) << t.id;
    bool other_same = false;
    for (const auto& [id, a] : attrs) other_same |= id != t.source_id && a.shape == src.shape && a.color == src.color;
    if (!other_same) EXPECT_EQ(tgt.color, *new_colour) << t.id;
    ++colour_edits;
  }
  EXPECT_GT(colour_edits, 5);
}

TEST(Build, ReadManifestNamesMalformedLine) {
  TempDir dir("manifest_bad");
  locedit::testing::spit(dir / "m.jsonl", "\n{not json}\n");
  try {
    read_manifest(dir / "m.jsonl");
    FAIL();
  } catch (const ParameterError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  locedit::testing::spit(dir / "m2.jsonl", "{\"id\": \"x\"}\n");
  EXPECT_THROW(read_manifest(dir / "m2.jsonl"), ParameterError);
  EXPECT_THROW(read_manifest(dir / "missing.jsonl"), IoError);
}

TEST(Lexicon, JsonRoundTripAndValidation) {
  const Lexicon lex = sw::shapes_lexicon();
  EXPECT_NO_THROW(lex.validate());
  const Lexicon back = Lexicon::from_json(lex.to_json());
  EXPECT_EQ(back.antonyms, lex.antonyms);
  EXPECT_EQ(back.cohyponyms, lex.cohyponyms);
  EXPECT_EQ(back.pos, lex.pos);
  Lexicon bad;
  bad.cohyponyms = {{"cat", {"cat", "dog"}}};
  EXPECT_THROW(bad.validate(), ParameterError);
  Lexicon upper;
  upper.pos = {{"Cat", PartOfSpeech::kNoun}};
  EXPECT_THROW(upper.validate(), ParameterError);
}
