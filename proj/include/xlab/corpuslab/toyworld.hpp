#pragma once

// A small generative world for desk-scale experiments: propositions over a
// fixed concept inventory, rendered into surface languages that share the
// meaning space but not the lexicon. Rendering the same proposition in two
// languages yields parallel text; perturbing one verb yields entailment pairs
// whose label depends only on lexical semantics; proper names yield BIO tags.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "xlab/common/random.hpp"
#include "xlab/corpuslab/corpus.hpp"

namespace xlab::corpuslab::toy {

enum class NounClass : std::uint8_t { person, animal, food, artifact, place };

struct Proposition {
  int subject = 0;       // noun concept, or -1 when `subject_name` is used
  int subject_name = -1; // index into person names
  int subject_adj = -1;
  int verb = 0;
  int object = -1;       // noun concept, -1 for intransitive
  int object_adj = -1;
  int place = -1;        // place noun concept for "in the <place>"
  int place_name = -1;   // index into place names (overrides place)
  int adverb = -1;
  int determiner = 0;
};

/// Verb concepts: class c, manner m; m == 0 is the class's general verb.
struct VerbInfo {
  int verb_class = 0;
  int manner = 0;
  bool transitive = false;
};

class World {
 public:
  static constexpr int kVerbClasses = 6;
  static constexpr int kMannersPerClass = 5;  // 1 general + 4 specific

  World();

  int noun_count() const { return static_cast<int>(noun_classes_.size()); }
  int verb_count() const { return kVerbClasses * kMannersPerClass; }
  int adjective_count() const { return 14; }
  int adverb_count() const { return 8; }
  int determiner_count() const { return 4; }
  int person_name_count() const { return 12; }
  int surname_count() const { return 8; }
  int place_name_count() const { return 8; }

  NounClass noun_class(int noun) const { return noun_classes_.at(static_cast<std::size_t>(noun)); }
  VerbInfo verb_info(int verb) const;
  int verb_id(int verb_class, int manner) const { return verb_class * kMannersPerClass + manner; }

  /// Topic-coherent documents: each document favours a few subjects and one
  /// place, so adjacent sentences are related.
  std::vector<std::vector<Proposition>> sample_documents(std::size_t n_docs, std::size_t doc_len,
                                                         std::uint64_t seed) const;
  Proposition sample(Rng& rng) const;

  /// Allowed object classes for a transitive verb class.
  bool object_allowed(int verb_class, NounClass cls) const;

 private:
  Proposition sample_with_topic(Rng& rng, const std::vector<int>& cast, int place) const;
  int zipf_pick(Rng& rng, const std::vector<int>& items) const;

  std::vector<NounClass> noun_classes_;
};

enum class EntailmentLabel : std::uint8_t { entailment = 0, contradiction = 1, neutral = 2 };
std::string label_name(EntailmentLabel label);
/// Throws std::invalid_argument for anything but the three label names.
EntailmentLabel parse_label(std::string_view name);

struct EntailmentPair {
  Proposition premise;
  Proposition hypothesis;
  EntailmentLabel label = EntailmentLabel::neutral;
};

/// Balanced labels. Premise and hypothesis differ only in the verb:
/// specific -> general of the same class is entailment, specific -> another
/// specific manner of the same class is contradiction, and a verb of another
/// class is neutral. Sentences are intransitive so that every pair has the
/// same shape.
std::vector<EntailmentPair> sample_entailment(const World& world, std::size_t n, std::uint64_t seed);

struct Language {
  std::string code;
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  std::vector<std::string> adjectives;
  std::vector<std::string> adverbs;
  std::vector<std::string> determiners;
  std::vector<std::string> person_names;
  std::vector<std::string> surnames;
  std::vector<std::string> place_names;
  std::string preposition;
  bool adjective_after_noun = false;
  bool verb_final = false;  // SOV

  /// English-like surface forms.
  static Language english(const World& world);
  /// Pseudo-words over a Cyrillic syllable inventory, deterministic in seed.
  static Language pseudo(const World& world, std::string code, std::uint64_t seed,
                         bool adjective_after_noun = true, bool verb_final = false);

  std::string render(const Proposition& p) const;
  /// Tokens with BIO tags (PER for person names, LOC for place names).
  std::pair<std::vector<std::string>, std::vector<std::string>> render_tagged(
      const Proposition& p, bool with_surname) const;
};

/// Renders documents of propositions as a corpus.
Corpus render_corpus(const Language& lang, const std::vector<std::vector<Proposition>>& docs);

}  // namespace xlab::corpuslab::toy
