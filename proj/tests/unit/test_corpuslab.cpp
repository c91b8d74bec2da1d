#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "doctest.h"
#include "xlab/common/unicode.hpp"
#include "xlab/corpuslab/ablations.hpp"
#include "xlab/corpuslab/toyworld.hpp"

using namespace xlab;
using namespace xlab::corpuslab;

namespace {

Corpus toy_corpus(std::size_t docs, std::size_t doc_len, std::uint64_t seed) {
  toy::World world;
  return render_corpus(toy::Language::english(world), world.sample_documents(docs, doc_len, seed));
}

// Independent reference for permute_sentence: materialize the pair list with
// nested loops, then partial Fisher-Yates with the same random source.
std::vector<std::string> reference_permute(std::vector<std::string> toks, double p, std::uint64_t seed) {
  const std::size_t L = toks.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = i + 1; j < L; ++j) pairs.emplace_back(i, j);
  const auto n = static_cast<std::size_t>(std::floor(p * static_cast<double>(pairs.size())));
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    std::swap(pairs[k], pairs[k + rng.index(pairs.size() - k)]);
    std::swap(toks[pairs[k].first], toks[pairs[k].second]);
  }
  return toks;
}

double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected) {
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace

TEST_CASE("fake language shifts in-range code points") {
  CharBijection b;
  b.shift = 0xE000;
  const auto out = make_fake_language(make_corpus({"ab"}), b);
  CHECK(utf8_decode(out.documents[0][0]) == CodePoints{0xE061, 0xE062});
}

TEST_CASE("out-of-range code points go through the placeholder") {
  CharBijection b;
  const auto out = map_text("a€", b);  // euro sign is above U+1FFD
  CHECK(utf8_decode(out) == CodePoints{0xE061, 0xE001});
}

TEST_CASE("fake language round-trips and has a disjoint alphabet") {
  const Corpus c = normalize(toy_corpus(125, 8, 1));
  REQUIRE(c.sentence_count() == 1000);
  CharBijection b;
  const Corpus fake = make_fake_language(c, b);
  CHECK(fake.documents.size() == c.documents.size());
  CHECK(invert_fake_language(fake, b) == c);

  std::set<char32_t> src, img;
  for (auto s : c.sentences())
    for (char32_t cp : utf8_decode(s)) src.insert(cp);
  for (auto s : fake.sentences())
    for (char32_t cp : utf8_decode(s)) img.insert(cp);
  for (char32_t cp : img) CHECK(src.count(cp) == 0);
}

TEST_CASE("bijection validation rejects unusable images") {
  CharBijection surrogate;
  surrogate.shift = 0xC000;  // 0x20.. -> 0xC020..0xDFFD crosses surrogates
  CHECK_THROWS_AS(surrogate.validate(), std::invalid_argument);

  CharBijection nonchar;
  nonchar.source_hi = 0x1FFF;  // image ends at U+FFFF
  CHECK_THROWS_AS(nonchar.validate(), std::invalid_argument);

  CharBijection overlap;
  overlap.shift = 0x100;
  CHECK_THROWS_AS(overlap.validate(), std::invalid_argument);

  CharBijection bad_placeholder;
  bad_placeholder.placeholder = U'x';
  CHECK_THROWS_AS(bad_placeholder.validate(), std::invalid_argument);

  CHECK_NOTHROW(CharBijection{}.validate());
  CHECK_THROWS_AS(make_fake_language(make_corpus({"ab"}), surrogate), std::invalid_argument);
}

TEST_CASE("permute_sentence edge cases") {
  const std::vector<std::string> toks{"a", "b", "c", "d"};
  CHECK(permute_sentence(toks, {0.0, 3}) == toks);
  CHECK(permute_sentence(std::vector<std::string>{"x"}, {1.0, 3}) == std::vector<std::string>{"x"});
  CHECK(permute_sentence(std::vector<std::string>{}, {1.0, 3}).empty());
  CHECK(permutation_pair_count(10, 0.25) == 11);
  CHECK(permutation_pair_count(10, 1.0) == 45);
  CHECK_THROWS_AS(permutation_pair_count(10, 1.5), std::invalid_argument);
}

TEST_CASE("permute_sentence matches the reference sampler") {
  std::vector<std::string> toks;
  for (int i = 0; i < 10; ++i) toks.push_back("t" + std::to_string(i));
  const auto got = permute_sentence(toks, {1.0, 7});
  CHECK(got == reference_permute(toks, 1.0, 7));
  // Frozen output of the reference sampler.
  const std::vector<std::string> frozen{"t5", "t2", "t6", "t1", "t3", "t0", "t8", "t4", "t7", "t9"};
  CHECK(got == frozen);

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (double p : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      CHECK(permute_sentence(toks, {p, seed}) == reference_permute(toks, p, seed));
    }
  }
}

TEST_CASE("permute_sentence preserves the multiset") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> toks(rng.index(30));
    for (auto& t : toks) t = static_cast<int>(rng.index(6));
    const double p = rng.uniform();
    auto out = permute_sentence(toks, {p, rng.next()});
    std::sort(out.begin(), out.end());
    std::sort(toks.begin(), toks.end());
    CHECK(out == toks);
  }
}

TEST_CASE("permute_corpus is deterministic and p=0 is the identity") {
  const Corpus c = toy_corpus(20, 6, 5);
  Segmenter words{[](const std::string& s) { return split_words(s); }, " "};
  CHECK(permute_corpus(c, words, {0.0, 9}) == c);
  const auto a = permute_corpus(c, words, {0.5, 9});
  const auto b = permute_corpus(c, words, {0.5, 9});
  CHECK(format_corpus(a) == format_corpus(b));
  CHECK(a != c);
  CHECK(permute_corpus(c, words, {0.5, 10}) != a);
}

TEST_CASE("kendall tau distance") {
  CHECK(kendall_tau_distance({0, 1, 2, 3}) == 0.0);
  CHECK(kendall_tau_distance({3, 2, 1, 0}) == 1.0);
  CHECK(kendall_tau_distance({1, 0, 2}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("collect_unigram_table on a single sentence") {
  const auto t = collect_unigram_table(make_corpus({"a a b"}));
  CHECK(t.counts == std::map<std::string, std::uint64_t>{{"a", 2}, {"b", 1}});
  CHECK(t.total == 3);
  CHECK(t.length_histogram == std::map<std::size_t, std::uint64_t>{{3, 1}});
  CHECK_THROWS_AS(collect_unigram_table(Corpus{}), std::invalid_argument);
}

TEST_CASE("unigram table matches an independent recount") {
  const Corpus c = toy_corpus(1250, 8, 2);
  REQUIRE(c.sentence_count() == 10000);
  const auto t = collect_unigram_table(c);
  std::map<std::string, std::uint64_t> counts;
  std::map<std::size_t, std::uint64_t> hist;
  std::uint64_t total = 0;
  for (auto s : c.sentences()) {
    std::istringstream in{std::string(s)};
    std::string w;
    std::size_t len = 0;
    while (in >> w) ++counts[w], ++len;
    ++hist[len];
    total += len;
  }
  CHECK(t.counts == counts);
  CHECK(t.length_histogram == hist);
  CHECK(t.total == total);
}

TEST_CASE("synthesize_frequency_corpus with single support") {
  UnigramTable t;
  t.counts = {{"x", 1}};
  t.total = 1;
  t.length_histogram = {{2, 1}};
  const auto c = synthesize_frequency_corpus(t, 3, 1);
  const auto s = c.sentences();
  REQUIRE(s.size() == 3);
  for (auto sent : s) CHECK(sent == "x x");
  CHECK_THROWS_AS(synthesize_frequency_corpus(UnigramTable{}, 3, 1), std::invalid_argument);
}

TEST_CASE("synthesized corpus fits the source unigram and length distributions") {
  const auto table = collect_unigram_table(toy_corpus(500, 8, 3));
  // ~100k words at the toy corpus mean length.
  const auto c = synthesize_frequency_corpus(table, 24000, 77);
  CHECK(format_corpus(c) == format_corpus(synthesize_frequency_corpus(table, 24000, 77)));
  const auto got = collect_unigram_table(c);
  CHECK(got.total >= 100000);

  // Pool words with expected count < 5 into one bin.
  std::vector<double> obs, exp;
  double pooled_o = 0, pooled_e = 0;
  for (const auto& [w, cnt] : table.counts) {
    const double e = static_cast<double>(cnt) / static_cast<double>(table.total) * static_cast<double>(got.total);
    const double o = got.counts.count(w) ? static_cast<double>(got.counts.at(w)) : 0.0;
    if (e < 5) {
      pooled_o += o, pooled_e += e;
    } else {
      obs.push_back(o), exp.push_back(e);
    }
  }
  if (pooled_e > 0) obs.push_back(pooled_o), exp.push_back(pooled_e);
  CHECK(chi_square_p(obs, exp) > 0.01);

  std::vector<double> lobs, lexp;
  std::uint64_t hist_total = 0;
  for (const auto& [len, cnt] : table.length_histogram) hist_total += cnt;
  for (const auto& [len, cnt] : table.length_histogram) {
    lexp.push_back(static_cast<double>(cnt) / static_cast<double>(hist_total) * 24000.0);
    lobs.push_back(got.length_histogram.count(len) ? static_cast<double>(got.length_histogram.at(len)) : 0.0);
  }
  CHECK(chi_square_p(lobs, lexp) > 0.01);
}

TEST_CASE("wordpiece contribution is the real-minus-fake gap") {
  CHECK(wordpiece_contribution(72.3, 70.9) == doctest::Approx(1.4));
  CHECK(wordpiece_contribution(60.1, 59.6) == doctest::Approx(0.5));
  CHECK(wordpiece_contribution(41.0, 41.0) == 0.0);
}

TEST_CASE("corpus file format round-trips and splits documents on blank lines") {
  const std::string text = "  one  sentence \nsecond\n\n\nthird\n";
  const Corpus c = parse_corpus(text);
  REQUIRE(c.documents.size() == 2);
  CHECK(c.documents[0] == Document{"one sentence", "second"});
  CHECK(c.documents[1] == Document{"third"});
  CHECK(parse_corpus(format_corpus(c)) == c);
  CHECK_THROWS_AS(parse_corpus("bad \xff byte"), std::invalid_argument);
}

TEST_CASE("toy languages render parallel sentences") {
  toy::World world;
  const auto en = toy::Language::english(world);
  const auto xx = toy::Language::pseudo(world, "xx", 5);
  const auto docs = world.sample_documents(3, 4, 9);
  for (const auto& d : docs) {
    for (const auto& p : d) {
      CHECK(split_words(en.render(p)).size() == split_words(xx.render(p)).size());
    }
  }
  const auto pairs = toy::sample_entailment(world, 300, 4);
  std::array<int, 3> counts{};
  for (const auto& e : pairs) {
    ++counts[static_cast<int>(e.label)];
    CHECK(e.premise.subject == e.hypothesis.subject);
    CHECK(e.premise.verb != e.hypothesis.verb);
  }
  CHECK(counts == std::array<int, 3>{100, 100, 100});
  CHECK(toy::parse_label("neutral") == toy::EntailmentLabel::neutral);
  CHECK_THROWS_AS(toy::parse_label("maybe"), std::invalid_argument);
}
