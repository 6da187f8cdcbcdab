#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "scmm/data.hpp"
#include "scmm/error.hpp"
#include "support/temp_dir.hpp"

namespace scmm {
namespace {

using testing::TempDir;

const LabelSet kPerLoc({"PER", "LOC"});

template <class Fn>
std::string error_message(Fn&& fn, ErrorKind expected) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no error thrown";
  return {};
}

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

TEST(LabelSet, IndexLayout) {
  EXPECT_EQ(kPerLoc.size(), 5);
  EXPECT_EQ(kPerLoc.labels(), (std::vector<std::string>{"O", "B-PER", "I-PER", "B-LOC", "I-LOC"}));
  EXPECT_EQ(kPerLoc.index_of("O"), 0);
  EXPECT_EQ(kPerLoc.begin_of(1), 3);
  EXPECT_EQ(kPerLoc.inside_of(1), 4);
  EXPECT_EQ(kPerLoc.entity_of(4), 1);
  for (LabelId l = 0; l < kPerLoc.size(); ++l) EXPECT_EQ(kPerLoc.index_of(kPerLoc.name(l)), l);
}

TEST(LabelSet, RejectsBadEntityLists) {
  error_message([] { LabelSet(std::vector<std::string>{}); }, ErrorKind::schema);
  error_message([] { LabelSet({"PER", "PER"}); }, ErrorKind::schema);
  error_message([] { LabelSet({"O"}); }, ErrorKind::schema);
  EXPECT_FALSE(kPerLoc.find("B-XYZ").has_value());
}

TEST(ReadSplit, SingleSentence) {
  TempDir dir;
  auto path = dir.write("one.jsonl",
                        R"({"id": "s1", "tokens": ["Mark", "went"], "annotations": {"dict": ["B-PER", "O"]}})"
                        "\n");
  Dataset ds = load_dataset(path, {"PER"});
  const Split& split = ds.split("one");
  ASSERT_EQ(split.size(), 1u);
  const auto& inst = split.instances[0];
  EXPECT_EQ(inst.sentence.length(), 2);
  EXPECT_EQ(inst.weak.num_lfs(), 1);
  EXPECT_EQ(inst.weak.obs, (std::vector<std::vector<LabelId>>{{1, 0}}));
  EXPECT_FALSE(inst.sentence.gold.has_value());
}

TEST(ReadSplit, LengthMismatchNamesRecord) {
  TempDir dir;
  auto path = dir.write("bad.jsonl",
                        R"({"id": "rec-7", "tokens": ["a", "b"], "annotations": {"x": ["O", "O", "O"]}})"
                        "\n");
  auto msg = error_message([&] { read_split(path, kPerLoc, "bad"); }, ErrorKind::schema);
  EXPECT_NE(msg.find("rec-7"), std::string::npos) << msg;
}

TEST(ReadSplit, UnknownLabel) {
  TempDir dir;
  auto path = dir.write("bad.jsonl",
                        R"({"id": "r", "tokens": ["a"], "annotations": {"x": ["B-XYZ"]}})"
                        "\n");
  auto msg = error_message([&] { read_split(path, kPerLoc, "bad"); }, ErrorKind::schema);
  EXPECT_NE(msg.find("unknown label"), std::string::npos) << msg;
}

TEST(ReadSplit, MalformedLineReportsLineNumber) {
  TempDir dir;
  auto path = dir.write("bad.jsonl",
                        R"({"id": "r", "tokens": ["a"], "annotations": {"x": ["O"]}})"
                        "\n{not json\n");
  auto msg = error_message([&] { read_split(path, kPerLoc, "bad"); }, ErrorKind::parse);
  EXPECT_NE(msg.find(":2"), std::string::npos) << msg;
}

TEST(ReadSplit, InconsistentLfSetAndMissingField) {
  TempDir dir;
  auto a = dir.write("a.jsonl",
                     R"({"id": "1", "tokens": ["a"], "annotations": {"x": ["O"]}})"
                     "\n"
                     R"({"id": "2", "tokens": ["a"], "annotations": {"y": ["O"]}})"
                     "\n");
  error_message([&] { read_split(a, kPerLoc, "a"); }, ErrorKind::schema);
  auto b = dir.write("b.jsonl", R"({"id": "1", "tokens": ["a"]})"
                                "\n");
  auto msg = error_message([&] { read_split(b, kPerLoc, "b"); }, ErrorKind::schema);
  EXPECT_NE(msg.find("annotations"), std::string::npos) << msg;
}

TEST(ReadSplit, LfOrderFollowsFirstRecord) {
  TempDir dir;
  auto path = dir.write("a.jsonl",
                        R"({"id": "1", "tokens": ["a"], "annotations": {"x": ["B-PER"], "y": ["O"]}})"
                        "\n"
                        R"({"id": "2", "tokens": ["a"], "annotations": {"y": ["B-LOC"], "x": ["O"]}})"
                        "\n");
  Split s = read_split(path, kPerLoc, "a");
  EXPECT_EQ(s.instances[1].weak.lf_names, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(s.instances[1].weak.at(1, 0), kPerLoc.index_of("B-LOC"));
}

Split small_split() {
  Split s;
  s.name = "train";
  for (int m = 0; m < 3; ++m) {
    Instance inst;
    inst.sentence.id = "s" + std::to_string(m);
    const int T = 2 + m;
    for (int t = 0; t < T; ++t) inst.sentence.tokens.push_back("tok" + std::to_string(t));
    inst.sentence.gold = std::vector<LabelId>(static_cast<std::size_t>(T), 0);
    (*inst.sentence.gold)[0] = 1;
    inst.weak.lf_names = {"a", "b"};
    inst.weak.obs = {std::vector<LabelId>(static_cast<std::size_t>(T), 3),
                     std::vector<LabelId>(static_cast<std::size_t>(T), 0)};
    EmbeddingSequence e;
    e.vectors = Matrix::Constant(T + 1, 4, 0.25 * (m + 1));
    inst.embedding = e;
    s.instances.push_back(inst);
  }
  return s;
}

TEST(ReadSplit, WriteReadRoundTrip) {
  TempDir dir;
  const Split s = small_split();
  write_split(dir / "rt.jsonl", s, kPerLoc);
  Split back = read_split(dir / "rt.jsonl", kPerLoc, "train");
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.instances[i].sentence.id, s.instances[i].sentence.id);
    EXPECT_EQ(back.instances[i].sentence.tokens, s.instances[i].sentence.tokens);
    EXPECT_EQ(back.instances[i].sentence.gold, s.instances[i].sentence.gold);
    EXPECT_EQ(back.instances[i].weak.obs, s.instances[i].weak.obs);
    EXPECT_EQ(back.instances[i].weak.lf_names, s.instances[i].weak.lf_names);
  }
}

TEST(Embeddings, HandWrittenFileAttaches) {
  TempDir dir;
  auto jsonl = dir.write("d.jsonl", R"({"id": "s1", "tokens": ["Mark", "went"], "annotations": {"x": ["B-PER", "O"]}})"
                                    "\n");
  {
    std::ofstream out(dir / "d.emb", std::ios::binary);
    out.write("SCMM", 4);
    put_u32(out, 1);
    put_u32(out, 1);
    put_u32(out, 8);
    put_u32(out, 2);
    for (int i = 0; i < 3 * 8; ++i) {
      const float v = static_cast<float>(i) * 0.5f;
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  Split s = read_split(jsonl, kPerLoc, "d");
  load_embeddings(dir / "d.emb", s);
  ASSERT_TRUE(s.has_embeddings());
  const auto& e = *s.instances[0].embedding;
  EXPECT_EQ(e.dim(), 8);
  EXPECT_EQ(e.length(), 2);
  EXPECT_EQ(e.sentence()(1), 0.5);
  EXPECT_EQ(e.token(2)(0), 8.0);
}

TEST(Embeddings, RoundTripIsExactForFloat32Values) {
  TempDir dir;
  Split s = small_split();
  write_embeddings(dir / "e.emb", s);
  Split t = small_split();
  for (auto& inst : t.instances) inst.embedding.reset();
  load_embeddings(dir / "e.emb", t);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(t.instances[i].embedding->vectors, s.instances[i].embedding->vectors);
}

TEST(Embeddings, FormatErrors) {
  TempDir dir;
  Split s = small_split();
  write_embeddings(dir / "e.emb", s);
  std::string bytes = testing::slurp(dir / "e.emb");

  std::string bad = bytes;
  bad[0] = 'X';
  testing::TempDir d2;
  auto p = d2.write("bad.emb", bad);
  auto msg = error_message([&] { load_embeddings(p, s); }, ErrorKind::format);
  EXPECT_NE(msg.find("bad magic"), std::string::npos);

  bad = bytes;
  bad[4] = 2;
  p = d2.write("ver.emb", bad);
  error_message([&] { load_embeddings(p, s); }, ErrorKind::format);

  Split one = s;
  one.instances.resize(1);
  msg = error_message([&] { load_embeddings(dir / "e.emb", one); }, ErrorKind::format);
  EXPECT_NE(msg.find("holds 3"), std::string::npos) << msg;

  Split shifted = s;
  shifted.instances[1].sentence.tokens.push_back("extra");
  msg = error_message([&] { load_embeddings(dir / "e.emb", shifted); }, ErrorKind::format);
  EXPECT_NE(msg.find("s1"), std::string::npos) << msg;

  p = d2.write("trunc.emb", bytes.substr(0, bytes.size() - 3));
  error_message([&] { load_embeddings(p, s); }, ErrorKind::format);

  p = d2.write("trail.emb", bytes + "x");
  error_message([&] { load_embeddings(p, s); }, ErrorKind::format);

  bad = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bad.data() + 16 + 4, &nan, 4);
  p = d2.write("nan.emb", bad);
  error_message([&] { load_embeddings(p, s); }, ErrorKind::numeric);
}

TEST(ValidateBio, StrictAndConll) {
  const LabelId O = 0, BP = 1, IP = 2, IL = 4;
  EXPECT_TRUE(validate_bio({O, BP, IP}, kPerLoc, BioMode::strict).empty());
  EXPECT_TRUE(validate_bio({O, BP, IP}, kPerLoc, BioMode::conll).empty());

  auto v = validate_bio({O, IP}, kPerLoc, BioMode::strict);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].position, 1);
  EXPECT_TRUE(validate_bio({O, IP}, kPerLoc, BioMode::conll).empty());

  v = validate_bio({BP, IL}, kPerLoc, BioMode::strict);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].position, 1);
}

TEST(Dataset, SplitsShareLfList) {
  Dataset ds(kPerLoc);
  ds.add_split(small_split());
  Split other = small_split();
  other.name = "valid";
  for (auto& inst : other.instances) inst.weak.lf_names = {"a", "c"};
  error_message([&] { ds.add_split(other); }, ErrorKind::schema);
  EXPECT_TRUE(ds.has_split("train"));
  EXPECT_FALSE(ds.has_split("valid"));
}

}  // namespace
}  // namespace scmm
