// Copyright 2026 The UBW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "testing/test_util.h"
#include "ubw/container.h"
#include "ubw/data.h"
#include "ubw/digest.h"
#include "ubw/error.h"
#include "ubw/rng.h"

namespace ubw {
namespace {

using Bytes = std::vector<std::uint8_t>;

void PutBe32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

Bytes IdxImages(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, const Bytes& pixels,
                std::uint32_t magic = 0x00000803) {
  Bytes out;
  PutBe32(out, magic);
  PutBe32(out, n);
  PutBe32(out, rows);
  PutBe32(out, cols);
  out.insert(out.end(), pixels.begin(), pixels.end());
  return out;
}

Bytes IdxLabels(const Bytes& labels, std::uint32_t magic = 0x00000801) {
  Bytes out;
  PutBe32(out, magic);
  PutBe32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

ErrorCode CodeOf(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

TEST(DataIdx, ThreeImageFixture) {
  testing::TempDir dir;
  const Bytes pixels{0, 128, 255, 0, 128, 128, 255, 255, 0, 0, 0, 128};
  WriteFileBytes(dir / "img", IdxImages(3, 2, 2, pixels));
  WriteFileBytes(dir / "lab", IdxLabels({0, 1, 2}));
  const auto data = LoadIdx(dir / "img", dir / "lab");
  ASSERT_EQ(data.size(), 3u);
  EXPECT_EQ(data.image_shape(), (ImageShape{1, 2, 2}));
  EXPECT_EQ(data.classes(), 3u);
  EXPECT_EQ(data.labels(), (std::vector<int>{1, 2, 3}));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    EXPECT_DOUBLE_EQ(data.pixels()[i], pixels[i] / 255.0);
  }
  EXPECT_DOUBLE_EQ(data.pixels()[2], 1.0);
}

TEST(DataIdx, CountMismatchAndBadMagic) {
  testing::TempDir dir;
  WriteFileBytes(dir / "img", IdxImages(10, 1, 1, Bytes(10, 7)));
  WriteFileBytes(dir / "lab", IdxLabels(Bytes(9, 0)));
  try {
    LoadIdx(dir / "img", dir / "lab");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
  }
  WriteFileBytes(dir / "bad", IdxImages(10, 1, 1, Bytes(10, 7), 0));
  WriteFileBytes(dir / "lab10", IdxLabels(Bytes(10, 0)));
  try {
    LoadIdx(dir / "bad", dir / "lab10");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
    EXPECT_EQ(e.offset(), 0u);
  }
  WriteFileBytes(dir / "short", IdxImages(10, 2, 2, Bytes(10, 7)));
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir / "short", dir / "lab10"); }), ErrorCode::kFormat);
  EXPECT_EQ(CodeOf([&] { LoadIdx(dir / "missing", dir / "lab10"); }), ErrorCode::kIo);
}

TEST(DataIdx, WriteThenLoadIsIdentity) {
  testing::TempDir dir;
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + gen() % 20, h = 1 + gen() % 6, w = 1 + gen() % 6;
    Bytes pixels(n * h * w);
    for (auto& p : pixels) p = static_cast<std::uint8_t>(gen());
    Bytes labels(n);
    for (auto& l : labels) l = static_cast<std::uint8_t>(gen() % 10);
    labels[0] = 9;
    const auto img = IdxImages(n, h, w, pixels);
    const auto lab = IdxLabels(labels);
    WriteFileBytes(dir / "a", img);
    WriteFileBytes(dir / "b", lab);
    const auto data = LoadIdx(dir / "a", dir / "b");
    WriteIdx(data, dir / "c", dir / "d");
    EXPECT_EQ(ReadFileBytes(dir / "c"), img);
    EXPECT_EQ(ReadFileBytes(dir / "d"), lab);
    const auto again = LoadIdx(dir / "c", dir / "d");
    EXPECT_EQ(again.pixels(), data.pixels());
    EXPECT_EQ(again.labels(), data.labels());
  }
}

TEST(DataCifar, SingleRecordAndErrors) {
  testing::TempDir dir;
  Bytes record(3073, 0);
  record[0] = 0;
  record[1] = 255;         // first red pixel
  record[1 + 1024] = 51;   // first green pixel
  record[1 + 2048] = 102;  // first blue pixel
  WriteFileBytes(dir / "one.bin", record);
  const std::vector<std::filesystem::path> files{dir / "one.bin"};
  const auto data = LoadCifarBinary(files);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data.label(0), 1);
  EXPECT_EQ(data.classes(), 10u);
  EXPECT_EQ(data.image_shape(), (ImageShape{3, 32, 32}));
  EXPECT_DOUBLE_EQ(data.image(0)[0], 1.0);
  EXPECT_DOUBLE_EQ(data.image(0)[1024], 0.2);
  EXPECT_DOUBLE_EQ(data.image(0)[2048], 0.4);

  WriteFileBytes(dir / "empty.bin", Bytes{});
  const std::vector<std::filesystem::path> empty{dir / "empty.bin"};
  EXPECT_EQ(CodeOf([&] { LoadCifarBinary(empty); }), ErrorCode::kFormat);
  WriteFileBytes(dir / "short.bin", Bytes(3000, 0));
  const std::vector<std::filesystem::path> short_file{dir / "short.bin"};
  EXPECT_EQ(CodeOf([&] { LoadCifarBinary(short_file); }), ErrorCode::kFormat);
  record[0] = 10;
  WriteFileBytes(dir / "label.bin", record);
  const std::vector<std::filesystem::path> bad_label{dir / "label.bin"};
  EXPECT_EQ(CodeOf([&] { LoadCifarBinary(bad_label); }), ErrorCode::kFormat);
}

TEST(DataSynth, CountsAndDeterminism) {
  SynthOptions opt;
  opt.classes = 10;
  opt.per_class = 100;
  const auto a = SynthPatterns(opt);
  EXPECT_EQ(a.size(), 1000u);
  EXPECT_EQ(a.ClassCounts(), std::vector<std::size_t>(10, 100));
  const auto b = SynthPatterns(opt);
  EXPECT_EQ(a.pixels(), b.pixels());
  EXPECT_EQ(a.labels(), b.labels());
  opt.seed = 2;
  EXPECT_NE(SynthPatterns(opt).pixels(), a.pixels());
  for (double v : a.pixels()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(DataSynth, ZeroNoiseGivesTemplates) {
  SynthOptions opt;
  opt.classes = 4;
  opt.per_class = 3;
  opt.noise = 0.0;
  opt.smooth = 2.0;
  const auto data = SynthPatterns(opt);
  const auto templates = SynthTemplates(opt);
  const std::size_t size = opt.shape.size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto img = data.image(i);
    const std::size_t k = static_cast<std::size_t>(data.label(i) - 1);
    EXPECT_TRUE(std::equal(img.begin(), img.end(), templates.begin() + k * size)) << i;
  }
}

TEST(DataSynth, SplitsShareTemplatesButNotNoise) {
  SynthOptions train;
  train.per_class = 5;
  SynthOptions test = train;
  test.split = "test";
  EXPECT_EQ(SynthTemplates(train), SynthTemplates(test));
  EXPECT_NE(SynthPatterns(train).pixels(), SynthPatterns(test).pixels());
}

TEST(DataSubset, FloorRuleAndDeterminism) {
  const RngStream rng(3);
  const auto plan = SelectSubset(1000, 0.1, rng);
  EXPECT_EQ(plan.indices.size(), 100u);
  EXPECT_TRUE(std::is_sorted(plan.indices.begin(), plan.indices.end()));
  EXPECT_EQ(std::adjacent_find(plan.indices.begin(), plan.indices.end()), plan.indices.end());
  EXPECT_EQ(SelectSubset(1000, 0.1, RngStream(3)).indices, plan.indices);
  EXPECT_EQ(SelectSubset(3, 0.5, rng).indices.size(), 1u);
  EXPECT_EQ(PoisonCount(1000, 0.1), 100u);
  for (double bad : {0.0, 1.0, 1.5, -0.1}) {
    EXPECT_EQ(CodeOf([&] { SelectSubset(10, bad, rng); }), ErrorCode::kInvalidArgument) << bad;
  }
}

TEST(DataSubset, IndexListPlans) {
  const auto plan = SplitPlanFromIndices(10, {7, 2, 5});
  EXPECT_EQ(plan.indices, (std::vector<std::size_t>{2, 5, 7}));
  EXPECT_DOUBLE_EQ(plan.gamma, 0.3);
  EXPECT_EQ(CodeOf([] { SplitPlanFromIndices(10, {3, 3}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { SplitPlanFromIndices(10, {10}); }), ErrorCode::kInvalidArgument);
}

TEST(DataRng, SubstreamsAreIndependent) {
  RngStream a(11);
  RngStream b(11);
  for (int i = 0; i < 50; ++i) b.Uniform();
  RngStream sa = a.Substream("labels");
  RngStream sb = b.Substream("labels");
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sa.Uniform(), sb.Uniform());
  RngStream other = a.Substream("selection");
  RngStream again = a.Substream("labels");
  EXPECT_NE(other.Uniform(), again.Uniform());
  const auto perm = RngStream(2).Permutation(50);
  auto sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(DataContainer, DatasetRoundTripIsBitIdentical) {
  testing::TempDir dir;
  SynthOptions opt;
  opt.per_class = 7;
  opt.smooth = 2.0;
  auto data = SynthPatterns(opt);
  Provenance prov;
  prov.kind = "poisoned";
  prov.detail = {{"method", "ubw-p"}, {"gamma", 0.1}};
  prov.config_digest = "feed";
  data.set_provenance(prov);
  WriteDatasetFile(dir / "d.ubwd", data);
  const auto back = ReadDatasetFile(dir / "d.ubwd");
  EXPECT_EQ(back.pixels(), data.pixels());
  EXPECT_EQ(back.labels(), data.labels());
  EXPECT_EQ(back.image_shape(), data.image_shape());
  EXPECT_EQ(back.classes(), data.classes());
  EXPECT_EQ(back.provenance().kind, "poisoned");
  EXPECT_EQ(back.provenance().detail, prov.detail);
  EXPECT_EQ(back.provenance().config_digest, "feed");
  WriteDatasetFile(dir / "e.ubwd", back);
  EXPECT_EQ(ReadFileBytes(dir / "d.ubwd"), ReadFileBytes(dir / "e.ubwd"));
}

TEST(DataContainer, EncodeDecodeAndCorruption) {
  Container c;
  c.kind = ContainerKind::kCheckpoint;
  c.header = {{"x", 1}};
  c.payload = {0.1, -2.5, 1e-300, 3.0};
  const auto bytes = EncodeContainer(c);
  const auto back = DecodeContainer(bytes);
  EXPECT_EQ(back.kind, c.kind);
  EXPECT_EQ(back.header, c.header);
  EXPECT_EQ(back.payload, c.payload);
  for (std::size_t at : {std::size_t{0}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x40;
    EXPECT_EQ(CodeOf([&] { DecodeContainer(bad); }), ErrorCode::kFormat) << at;
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_EQ(CodeOf([&] { DecodeContainer(truncated); }), ErrorCode::kFormat);
}

TEST(DataDigest, KnownSha256Vectors) {
  EXPECT_EQ(Sha256Hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Sha256Hex(std::string_view("")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(DataDataset, ValidatesLabelsAndShape) {
  EXPECT_EQ(CodeOf([] { LabeledDataset({1, 1, 2}, 2, {0.1, 0.2}, {3}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(CodeOf([] { LabeledDataset({1, 1, 2}, 2, {0.1}, {1}); }),
            ErrorCode::kShapeMismatch);
}

}  // namespace
}  // namespace ubw
