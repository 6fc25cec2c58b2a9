#include <gtest/gtest.h>

#include <filesystem>

#include "gcvrnn/checkpoint.hpp"
#include "gcvrnn/dataset_io.hpp"

using namespace gcvrnn;

namespace {

DatasetFile sample_dataset(MaskingSpec spec, std::size_t count = 5) {
  DatasetFile f;
  f.header.masking = spec;
  f.header.seed = 42;
  f.header.agents = 4;
  f.header.t_past = 6;
  f.header.t_future = 3;
  for (auto& s : generate_sequences(count, 4, 6, 3, 42)) {
    DatasetRecord r;
    r.mask = apply_mask(s, spec);
    r.sequence = std::move(s);
    r.split = f.records.size() % 2 ? Split::test : Split::train;
    f.records.push_back(std::move(r));
  }
  return f;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_node = 4;
  c.d_graph = 4;
  c.hidden = 8;
  c.latent = 4;
  c.mlp_hidden = 8;
  c.z_feature = 4;
  c.ec_hidden = 4;
  c.n_max = 4;
  c.t_past = 6;
  c.t_future = 3;
  c.seed = 3;
  return c;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / ("gcvrnn_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(DatasetIo, RoundTripIsLossless) {
  const DatasetFile f = sample_dataset({MaskMode::camera, 20.0, {0, -35}});
  const DatasetFile g = decode_dataset(encode_dataset(f));
  EXPECT_EQ(f, g);
  EXPECT_EQ(encode_dataset(g), encode_dataset(f));
}

TEST(DatasetIo, RoundTripWithResultsAndOnDisk) {
  DatasetFile f = sample_dataset({MaskMode::circle, 5.0, {}}, 2);
  for (auto& r : f.records) {
    r.result = ResultSection{std::vector<double>(6 * 4 * 2, 0.1), std::vector<double>(3 * 4 * 2, -1.0 / 3.0)};
  }
  const auto path = (temp_dir() / "with_results.gcds").string();
  write_dataset(path, f);
  EXPECT_EQ(read_dataset(path), f);
  f.records[0].result.reset();
  EXPECT_THROW(encode_dataset(f), ContractError);
}

TEST(DatasetIo, CorruptedLengthFieldIsParseError) {
  const std::string bytes = encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}));
  const auto payload = bytes.find("end_header\n") + std::string("end_header\n").size();
  std::string bad = bytes;
  bad[payload] = static_cast<char>(0xff);
  bad[payload + 1] = static_cast<char>(0xff);
  EXPECT_THROW(decode_dataset(bad), ParseError);
  std::string shifted = bytes;
  shifted[payload] = static_cast<char>(shifted[payload] + 1);
  try {
    decode_dataset(shifted);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, VersionMismatchAndBadMagic) {
  std::string bytes = encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}));
  std::string v2 = bytes;
  v2.replace(0, std::string("GCVRNN-DATASET 1").size(), "GCVRNN-DATASET 2");
  try {
    decode_dataset(v2);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(decode_dataset("hello\n"), ParseError);
  EXPECT_THROW(decode_dataset(""), ParseError);
}

TEST(DatasetIo, TruncationAndTrailingBytes) {
  const std::string bytes = encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}));
  for (std::size_t cut : {std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_dataset(bytes.substr(0, cut)), ParseError) << cut;
  }
  EXPECT_THROW(decode_dataset(bytes + "x"), ParseError);
}

TEST(DatasetIo, HeaderErrorsNameTheLine) {
  std::string bytes = encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}));
  const auto pos = bytes.find("agents=4");
  bytes.replace(pos, 8, "agents=x");
  try {
    decode_dataset(bytes);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, ShapeDisagreementIsRejected) {
  DatasetFile f = sample_dataset({MaskMode::circle, 5.0, {}});
  f.header.agents = 5;
  EXPECT_THROW(encode_dataset(f), DimensionError);
  std::string bytes = encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}));
  bytes.replace(bytes.find("t_future=3"), 10, "t_future=2");
  EXPECT_THROW(decode_dataset(bytes), ParseError);
}

TEST(DatasetIo, StoredMasksMatchRegeneratedMasks) {
  const DatasetFile f = decode_dataset(encode_dataset(sample_dataset({MaskMode::circle, 5.0, {}}, 20)));
  EXPECT_EQ(count_mask_mismatches(f), 0u);
  DatasetFile g = f;
  g.header.masking.parameter = 3.0;
  EXPECT_GT(count_mask_mismatches(g), 0u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  GcVrnn m(small_config());
  Adam opt(m.parameters());
  for (std::size_t i = 0; i < m.parameters().size(); ++i) m.parameters()[i].grad = Tensor(m.parameters()[i].value.shape(), 0.25);
  opt.step();
  opt.step();
  const CheckpointData ck = decode_checkpoint(encode_checkpoint(make_checkpoint(m, &opt, {{"epoch", "2"}})));
  EXPECT_EQ(ck.meta.at("epoch"), "2");
  EXPECT_EQ(ck.optimizer_step, 2u);
  EXPECT_TRUE(ck.has_optimizer);
  auto back = model_from_checkpoint(ck);
  EXPECT_EQ(to_key_values(back->config()), to_key_values(m.config()));
  for (std::size_t i = 0; i < m.parameters().size(); ++i) EXPECT_EQ(back->parameters()[i].value, m.parameters()[i].value);
  Adam opt2(back->parameters());
  restore_optimizer(ck, *back, opt2);
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    EXPECT_EQ(opt2.first_moments()[i], opt.first_moments()[i]);
    EXPECT_EQ(opt2.second_moments()[i], opt.second_moments()[i]);
  }
}

TEST(Checkpoint, EvaluationAfterReloadIsBitExact) {
  ModelConfig c = small_config();
  GcVrnn m(c);
  std::mt19937_64 rng(1);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    for (double& v : m.parameters()[i].value.storage()) v += 0.01 * std::normal_distribution<double>()(rng);
  const auto path = (temp_dir() / "model.ckpt").string();
  save_checkpoint(path, m, nullptr);
  auto back = model_from_checkpoint(load_checkpoint(path));
  const DatasetFile f = sample_dataset({MaskMode::circle, 5.0, {}});
  for (const auto& r : f.records) {
    const auto a = m.run_inference(r.sequence, r.mask, 7);
    const auto b = back->run_inference(r.sequence, r.mask, 7);
    EXPECT_EQ(a.imputed, b.imputed);
    EXPECT_EQ(a.predicted, b.predicted);
  }
}

TEST(Checkpoint, CorruptionIsParseError) {
  GcVrnn m(small_config());
  const std::string bytes = encode_checkpoint(make_checkpoint(m, nullptr));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes + "junk"), ParseError);
  std::string v = bytes;
  v.replace(0, std::string("GCVRNN-CHECKPOINT 1").size(), "GCVRNN-CHECKPOINT 9");
  EXPECT_THROW(decode_checkpoint(v), ParseError);
  std::string unknown = bytes;
  unknown.insert(unknown.find("optimizer.present"), "config.bogus=1\n");
  EXPECT_THROW(decode_checkpoint(unknown), ParseError);
}

TEST(Checkpoint, ShapeMismatchOnRestore) {
  GcVrnn m(small_config());
  CheckpointData ck = make_checkpoint(m, nullptr);
  ck.tensors[0].second = Tensor::zeros(1, 1);
  EXPECT_THROW(restore_parameters(ck, m), DimensionError);
  ck.tensors.erase(ck.tensors.begin());
  EXPECT_THROW(restore_parameters(ck, m), DataError);
  Adam opt(m.parameters());
  EXPECT_THROW(restore_optimizer(make_checkpoint(m, nullptr), m, opt), DataError);
}
