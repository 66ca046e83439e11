#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "test_util.hpp"
#include "zsdiff/data.hpp"
#include "zsdiff/encoder.hpp"
#include "zsdiff/error.hpp"
#include "zsdiff/text.hpp"

using namespace zsdiff;

TEST(Text, TokenizeExamples) {
  Vocabulary v({"a", "b"});
  EXPECT_EQ(tokenize("ab", v), (std::vector<int64_t>{1, 2}));
  EXPECT_EQ(tokenize("a?b", v), (std::vector<int64_t>{1, v.unknown_id(), 2}));
  EXPECT_EQ(detokenize({1, 2}, v), "ab");
  EXPECT_THROW(detokenize({}, v), InputError);
  EXPECT_THROW(tokenize("", v), InputError);
  EXPECT_THROW(detokenize({99}, v), InputError);
}

TEST(Text, NormalizeCollapsesWhitespaceAndCase) {
  EXPECT_EQ(normalize_text("  Hello   World \n"), "hello world");
}

TEST(Text, RoundTripRandomStrings) {
  auto v = Vocabulary::default_characters();
  std::mt19937_64 rng(3);
  const std::string letters = "abcdefghijklmnopqrstuvwxyz',.?!-";
  for (int trial = 0; trial < 100; ++trial) {
    std::string s;
    const int len = 1 + static_cast<int>(rng() % 20);
    for (int i = 0; i < len; ++i) s += letters[rng() % letters.size()];
    EXPECT_EQ(detokenize(tokenize(s, v), v), s);
  }
}

TEST(Text, VocabularySaveLoad) {
  testutil::TempDir dir("vocab");
  auto v = Vocabulary::default_characters();
  v.save(dir / "vocab.txt");
  auto back = Vocabulary::load(dir / "vocab.txt");
  EXPECT_TRUE(back == v);
  EXPECT_EQ(back.size(), v.size());
  EXPECT_EQ(back.id("a"), v.id("a"));
}

TEST(Data, EmptyMetadataGivesEmptyCorpus) {
  testutil::TempDir dir("empty");
  std::ofstream(dir / "metadata.txt").close();
  EXPECT_TRUE(load_corpus(dir.path(), Vocabulary::default_characters()).empty());
}

TEST(Data, MissingWavSkippedWithWarning) {
  testutil::TempDir dir("missing");
  make_synthetic_corpus(2, 1, 0, dir.path());
  {
    std::ofstream meta(dir / "metadata.txt");
    meta << "spk00_000|spk00|abcd|wavs/spk00_000.wav\n";
    meta << "ghost|spk00|abcd|wavs/nope.wav\n";
  }
  testutil::WarningCounter warnings;
  auto corpus = load_corpus(dir.path(), Vocabulary::default_characters());
  EXPECT_EQ(corpus.size(), 1u);
  EXPECT_EQ(warnings.count, 1);
}

TEST(Data, MissingMetadataIsAnError) {
  testutil::TempDir dir("nometa");
  EXPECT_THROW(load_corpus(dir.path(), Vocabulary::default_characters()), std::exception);
}

TEST(Data, SyntheticCorpusShapeAndSpeakers) {
  testutil::TempDir dir("synth");
  make_synthetic_corpus(4, 8, 7, dir.path());
  auto corpus = load_corpus(dir.path(), Vocabulary::default_characters());
  ASSERT_EQ(corpus.size(), 32u);
  std::set<std::string> speakers;
  for (const auto& u : corpus) {
    speakers.insert(u.speaker_id);
    EXPECT_EQ(u.mel.frame_count(), static_cast<int64_t>(u.token_ids.size()) * 8);
  }
  EXPECT_EQ(speakers.size(), 4u);
}

TEST(Data, SyntheticCorpusDeterministic) {
  testutil::TempDir a("synA"), b("synB");
  make_synthetic_corpus(2, 3, 11, a.path());
  make_synthetic_corpus(2, 3, 11, b.path());
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(read(a / "metadata.txt"), read(b / "metadata.txt"));
  for (const auto& e : std::filesystem::directory_iterator(a / "wavs")) {
    EXPECT_EQ(read(e.path()), read(b.path() / "wavs" / e.path().filename())) << e.path();
  }
}

TEST(Data, SpeakersDifferInSpectralCentroid) {
  FeatureConfig c;
  auto centroid = [&](int speaker) {
    auto mel = wave_to_mel(render_synthetic("abcdefg", speaker, 0), c);
    auto power = torch::exp(mel.frames).mean(0);  // average amplitude per bin
    auto bins = torch::arange(c.n_mels, torch::kFloat32);
    return (power * bins).sum().item<double>() / power.sum().item<double>();
  };
  // Speakers 0 and 2 are 1.5 octaves apart in F0 with different tilts.
  EXPECT_GT(std::abs(centroid(0) - centroid(2)), 2.0);
  EXPECT_GT(std::abs(centroid(0) - centroid(3)), 2.0);
}

TEST(Data, SyntheticLengthIsSymbolsTimesFrames) {
  FeatureConfig c;
  SyntheticCorpusOptions o;
  o.symbol_frames = 5;
  auto w = render_synthetic("abc", 0, 1, o);
  EXPECT_EQ(wave_to_mel(w, c).frame_count(), 15);
}

TEST(Data, CollateShapesAndMasks) {
  std::mt19937_64 rng(0);
  auto a = testutil::random_utterance("a", "s0", 3, 10, 8, rng);
  auto b = testutil::random_utterance("b", "s1", 5, 14, 8, rng);
  auto single = collate({a});
  EXPECT_TRUE(single.token_mask.all().item<bool>());
  EXPECT_TRUE(single.mel_mask.all().item<bool>());
  auto batch = collate({a, b});
  EXPECT_EQ(batch.tokens.size(1), 5);
  EXPECT_EQ(batch.token_mask.sum(1)[0].item<int64_t>(), 3);
  EXPECT_EQ(batch.token_mask.sum(1)[1].item<int64_t>(), 5);
  EXPECT_EQ(batch.mels.size(1), 14);
  EXPECT_EQ(batch.tokens[0][4].item<int64_t>(), Vocabulary::kPadId);
  EXPECT_EQ(batch.mels[0].narrow(0, 10, 4).abs().sum().item<double>(), 0.0);
  auto ex = batch.example(1);
  EXPECT_TRUE(torch::equal(ex.mels[0], b.mel.frames));
  EXPECT_THROW(collate({}), InputError);
}

TEST(Data, PaddedLossEqualsPerUtteranceAverage) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Utterance> utts;
    const int b = 2 + static_cast<int>(rng() % 3);
    for (int i = 0; i < b; ++i) {
      utts.push_back(testutil::random_utterance("u" + std::to_string(i), "s", 2 + rng() % 4, 4 + rng() % 12, 6, rng));
    }
    auto batch = collate(utts);
    auto mu = torch::randn_like(batch.mels);
    const double padded = prior_loss(mu, batch.mels, batch.mel_mask).item<double>();
    double per = 0.0;
    for (int i = 0; i < b; ++i) {
      const auto m = batch.mel_lengths[static_cast<size_t>(i)];
      auto mi = mu[i].narrow(0, 0, m).unsqueeze(0);
      auto ex = batch.example(i);
      per += prior_loss(mi, ex.mels, ex.mel_mask).item<double>();
    }
    EXPECT_NEAR(padded, per / b, 1e-5);
  }
}
