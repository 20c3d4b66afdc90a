#include <gtest/gtest.h>

#include "helpers.hpp"

using namespace softneg;

TEST(Jsonl, CorpusRoundTrip) {
  const auto c = testing_util::small_corpus(300, 9);
  const std::string text = to_jsonl(c);
  std::istringstream in(text);
  const auto back = from_jsonl(in, pair_from_json);
  ASSERT_EQ(back.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(render(back[i].report), render(c[i].report));
    EXPECT_EQ(back[i].report.is_templated_normal, c[i].report.is_templated_normal);
    EXPECT_EQ(back[i].image, c[i].image);
    EXPECT_EQ(back[i].id, c[i].id);
  }
  EXPECT_EQ(to_jsonl(back), text);
}

TEST(Jsonl, FieldOrderIsFixed) {
  const auto line = to_json(testing_util::small_corpus(1)[0]).dump();
  EXPECT_EQ(line.rfind("{\"report_text\":", 0), 0u);
  EXPECT_LT(line.find("\"facts\""), line.find("\"image_feature\""));
  EXPECT_LT(line.find("\"image_feature\""), line.find("\"id\""));
}

TEST(Jsonl, TamperedFactsRejected) {
  auto j = nlohmann::json::parse(to_json(testing_util::small_corpus(1)[0]).dump());
  j["facts"] = nlohmann::json::array();
  j["report_text"] = "There is edema.";
  EXPECT_THROW(pair_from_json(j), std::runtime_error);
}

TEST(Jsonl, BadLineNamesLineNumber) {
  std::istringstream in(to_jsonl(testing_util::small_corpus(2)) + "{not json\n");
  try {
    from_jsonl(in, pair_from_json);
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Jsonl, TripletRoundTrip) {
  const auto triplets = generate_align_set(testing_util::small_corpus(200, 2), 5);
  ASSERT_FALSE(triplets.empty());
  const std::string text = to_jsonl(triplets);
  std::istringstream in(text);
  const auto back = from_jsonl(in, triplet_from_json);
  EXPECT_EQ(to_jsonl(back), text);
  for (const auto& t : back) EXPECT_FALSE(check_triplet(t).has_value());
}

TEST(Files, WriteOnce) {
  const auto dir = testing_util::temp_dir("write-once");
  const auto path = dir / "a.txt";
  write_new_file(path, "hello");
  EXPECT_NO_THROW(write_new_file(path, "hello"));
  EXPECT_THROW(write_new_file(path, "changed"), std::runtime_error);
  EXPECT_EQ(read_file(path), "hello");
  std::filesystem::remove_all(dir);
}

TEST(Specs, CorpusSpecOverlay) {
  CorpusSpec base;
  base.seed = 4;
  const auto c = corpus_spec_from_json(nlohmann::json::parse(R"({"n_reports": 12, "features": {"noise_sigma": 0.0}})"), base);
  EXPECT_EQ(c.n_reports, 12u);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.features.noise_sigma, 0.0);
  const auto back = corpus_spec_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_THROW(corpus_spec_from_json(nlohmann::json::parse(R"({"normal_fraction": 1.5})")), std::invalid_argument);
}
