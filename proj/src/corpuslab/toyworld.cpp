#include "xlab/corpuslab/toyworld.hpp"

#include <set>
#include <stdexcept>

#include "xlab/common/unicode.hpp"

namespace xlab::corpuslab::toy {

namespace {

constexpr std::array<NounClass, 45> kNounClasses = {
    NounClass::person,   NounClass::person,   NounClass::person,   NounClass::person,
    NounClass::person,   NounClass::person,   NounClass::person,   NounClass::person,
    NounClass::person,   NounClass::person,   NounClass::animal,   NounClass::animal,
    NounClass::animal,   NounClass::animal,   NounClass::animal,   NounClass::animal,
    NounClass::animal,   NounClass::animal,   NounClass::animal,   NounClass::animal,
    NounClass::food,     NounClass::food,     NounClass::food,     NounClass::food,
    NounClass::food,     NounClass::food,     NounClass::food,     NounClass::food,
    NounClass::artifact, NounClass::artifact, NounClass::artifact, NounClass::artifact,
    NounClass::artifact, NounClass::artifact, NounClass::artifact, NounClass::artifact,
    NounClass::artifact, NounClass::artifact, NounClass::place,    NounClass::place,
    NounClass::place,    NounClass::place,    NounClass::place,    NounClass::place,
    NounClass::place};

// Verb classes 0-2 intransitive, 3-5 transitive.
constexpr int kFirstTransitiveClass = 3;

const std::vector<std::string> kEnglishNouns = {
    "man",    "woman",  "child",   "teacher", "doctor", "farmer", "king",   "girl",   "boy",
    "friend", "dog",    "cat",     "bird",    "horse",  "fish",   "cow",    "fox",    "mouse",
    "bear",   "lion",   "apple",   "bread",   "soup",   "cake",   "rice",   "cheese", "fruit",
    "egg",    "house",  "boat",    "picture", "letter", "table",  "chair",  "box",    "book",
    "wall",   "basket", "park",    "river",   "city",   "garden", "forest", "school", "market"};

const std::vector<std::string> kEnglishVerbs = {
    "moves",     "runs",  "walks",   "swims",   "jumps",    // motion
    "speaks",    "sings", "shouts",  "whispers", "laughs",  // sound
    "rests",     "sleeps", "sits",   "waits",   "dreams",   // rest
    "consumes",  "eats",  "tastes",  "devours", "bites",    // consumption
    "perceives", "sees",  "watches", "notices", "finds",    // perception
    "handles",   "holds", "carries", "builds",  "paints"};  // handling

const std::vector<std::string> kEnglishAdjectives = {"big",   "small", "old",     "young", "happy",
                                                     "red",   "quiet", "tall",    "green", "strange",
                                                     "good",  "bad",   "bright",  "tired"};
const std::vector<std::string> kEnglishAdverbs = {"quickly", "slowly", "often", "quietly",
                                                  "today",   "again",  "early", "gladly"};
const std::vector<std::string> kEnglishDeterminers = {"the", "a", "this", "every"};
const std::vector<std::string> kEnglishNames = {"Anna", "Boris", "Clara", "David", "Elena", "Frank",
                                                "Greta", "Hugo", "Irene", "Jonas", "Karla", "Leon"};
const std::vector<std::string> kEnglishSurnames = {"Smith", "Miller", "Brown", "Fischer",
                                                   "Novak", "Garcia", "Weber", "Kowalski"};
const std::vector<std::string> kEnglishPlaces = {"Paris", "Berlin", "Madrid", "Oslo",
                                                 "Vienna", "Prague", "Lima",   "Cairo"};

std::vector<int> items_of_class(const std::vector<NounClass>& classes, NounClass c) {
  std::vector<int> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == c) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> range_items(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

}  // namespace

World::World() : noun_classes_(kNounClasses.begin(), kNounClasses.end()) {}

VerbInfo World::verb_info(int verb) const {
  if (verb < 0 || verb >= verb_count()) throw std::out_of_range("verb id out of range");
  VerbInfo v;
  v.verb_class = verb / kMannersPerClass;
  v.manner = verb % kMannersPerClass;
  v.transitive = v.verb_class >= kFirstTransitiveClass;
  return v;
}

bool World::object_allowed(int verb_class, NounClass cls) const {
  switch (verb_class) {
    case 3:
      return cls == NounClass::food;
    case 4:
      return cls != NounClass::place;
    case 5:
      return cls == NounClass::artifact || cls == NounClass::food;
    default:
      return false;
  }
}

int World::zipf_pick(Rng& rng, const std::vector<int>& items) const {
  double total = 0;
  for (std::size_t i = 0; i < items.size(); ++i) total += 1.0 / static_cast<double>(i + 1);
  double x = rng.uniform() * total;
  for (std::size_t i = 0; i < items.size(); ++i) {
    x -= 1.0 / static_cast<double>(i + 1);
    if (x < 0) return items[i];
  }
  return items.back();
}

Proposition World::sample(Rng& rng) const { return sample_with_topic(rng, {}, -1); }

// Each specific verb has a signature adverb and place, and each class a
// subject preference, so verbs are identifiable from context alone. A general
// verb borrows the signature of a random manner of its class.
Proposition World::sample_with_topic(Rng& rng, const std::vector<int>& cast, int place) const {
  Proposition p;
  const auto persons = items_of_class(noun_classes_, NounClass::person);
  const auto animals = items_of_class(noun_classes_, NounClass::animal);
  const auto places = items_of_class(noun_classes_, NounClass::place);

  p.verb = zipf_pick(rng, range_items(verb_count()));
  const VerbInfo vi = verb_info(p.verb);
  const int manner = vi.manner ? vi.manner : 1 + static_cast<int>(rng.index(kMannersPerClass - 1));
  const int signature = vi.verb_class * (kMannersPerClass - 1) + manner - 1;

  // Motion favours animals, sound favours people, handling needs people.
  double animal_share = 0.5;
  if (vi.verb_class == 0) animal_share = 0.8;
  if (vi.verb_class == 1) animal_share = 0.2;
  if (vi.verb_class == 5) animal_share = 0.0;
  auto compatible = [&](int noun) {
    return noun_class(noun) == NounClass::person || animal_share > 0.0;
  };
  if (rng.uniform() < 0.2) {
    p.subject = -1;
    p.subject_name = static_cast<int>(rng.index(static_cast<std::uint64_t>(person_name_count())));
  } else {
    std::vector<int> fits;
    for (int c : cast)
      if (compatible(c)) fits.push_back(c);
    if (!fits.empty() && rng.uniform() < 0.5) {
      p.subject = fits[rng.index(fits.size())];
    } else {
      p.subject = zipf_pick(rng, rng.uniform() < animal_share ? animals : persons);
    }
  }
  if (p.subject >= 0 && rng.uniform() < 0.3) p.subject_adj = zipf_pick(rng, range_items(adjective_count()));
  p.determiner = zipf_pick(rng, range_items(determiner_count()));
  if (vi.transitive) {
    std::vector<int> objs;
    for (int n = 0; n < noun_count(); ++n) {
      if (object_allowed(vi.verb_class, noun_class(n))) objs.push_back(n);
    }
    p.object = zipf_pick(rng, objs);
    if (rng.uniform() < 0.3) p.object_adj = zipf_pick(rng, range_items(adjective_count()));
  }
  if (rng.uniform() < 0.4) {
    const double u = rng.uniform();
    if (u < 0.2) {
      p.place_name = static_cast<int>(rng.index(static_cast<std::uint64_t>(place_name_count())));
    } else if (u < 0.8) {
      p.place = places[static_cast<std::size_t>(signature / adverb_count()) % places.size()];
    } else if (place >= 0 && rng.uniform() < 0.5) {
      p.place = place;
    } else {
      p.place = zipf_pick(rng, places);
    }
  }
  if (rng.uniform() < 0.5) {
    p.adverb = rng.uniform() < 0.8 ? signature % adverb_count() : zipf_pick(rng, range_items(adverb_count()));
  }
  return p;
}

std::vector<std::vector<Proposition>> World::sample_documents(std::size_t n_docs, std::size_t doc_len,
                                                              std::uint64_t seed) const {
  std::vector<std::vector<Proposition>> docs;
  docs.reserve(n_docs);
  std::vector<int> animate = items_of_class(noun_classes_, NounClass::person);
  for (int a : items_of_class(noun_classes_, NounClass::animal)) animate.push_back(a);
  const auto places = items_of_class(noun_classes_, NounClass::place);
  for (std::size_t d = 0; d < n_docs; ++d) {
    Rng rng(derive_seed(seed, {d}));
    std::vector<int> cast;
    for (int k = 0; k < 3; ++k) cast.push_back(animate[rng.index(animate.size())]);
    const int place = places[rng.index(places.size())];
    std::vector<Proposition> doc;
    for (std::size_t s = 0; s < doc_len; ++s) doc.push_back(sample_with_topic(rng, cast, place));
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::string label_name(EntailmentLabel label) {
  switch (label) {
    case EntailmentLabel::entailment:
      return "entailment";
    case EntailmentLabel::contradiction:
      return "contradiction";
    case EntailmentLabel::neutral:
      return "neutral";
  }
  return "neutral";
}

EntailmentLabel parse_label(std::string_view name) {
  if (name == "entailment") return EntailmentLabel::entailment;
  if (name == "contradiction") return EntailmentLabel::contradiction;
  if (name == "neutral") return EntailmentLabel::neutral;
  throw std::invalid_argument("unknown entailment label '" + std::string(name) + "'");
}

std::vector<EntailmentPair> sample_entailment(const World& world, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EntailmentPair> out;
  out.reserve(n);
  const int intransitive_classes = kFirstTransitiveClass;
  const int manners = World::kMannersPerClass;
  for (std::size_t i = 0; i < n; ++i) {
    Proposition p = world.sample(rng);
    p.object = -1;
    p.object_adj = -1;
    const auto label = static_cast<EntailmentLabel>(i % 3);
    const int cls = static_cast<int>(rng.index(static_cast<std::uint64_t>(intransitive_classes)));
    const int manner = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(manners - 1)));
    p.verb = world.verb_id(cls, manner);
    Proposition h = p;
    switch (label) {
      case EntailmentLabel::entailment:
        h.verb = world.verb_id(cls, 0);
        break;
      case EntailmentLabel::contradiction: {
        int other = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(manners - 2)));
        if (other >= manner) ++other;
        h.verb = world.verb_id(cls, other);
        break;
      }
      case EntailmentLabel::neutral: {
        int oc = static_cast<int>(rng.index(static_cast<std::uint64_t>(intransitive_classes - 1)));
        if (oc >= cls) ++oc;
        h.verb = world.verb_id(oc, static_cast<int>(rng.index(static_cast<std::uint64_t>(manners))));
        break;
      }
    }
    out.push_back({p, h, label});
  }
  Rng shuffle_rng(derive_seed(seed, {0x5EEDu}));
  shuffle_rng.shuffle(out.begin(), out.end());
  return out;
}

Language Language::english(const World& world) {
  Language l;
  l.code = "en";
  l.nouns = kEnglishNouns;
  l.verbs = kEnglishVerbs;
  l.adjectives = kEnglishAdjectives;
  l.adverbs = kEnglishAdverbs;
  l.determiners = kEnglishDeterminers;
  l.person_names = kEnglishNames;
  l.surnames = kEnglishSurnames;
  l.place_names = kEnglishPlaces;
  l.preposition = "in";
  if (static_cast<int>(l.nouns.size()) != world.noun_count() ||
      static_cast<int>(l.verbs.size()) != world.verb_count()) {
    throw std::logic_error("English lexicon does not cover the world");
  }
  return l;
}

namespace {

class PseudoWordMaker {
 public:
  explicit PseudoWordMaker(std::uint64_t seed) : rng_(seed) {}

  std::string make(int min_syllables, int max_syllables, bool capitalize) {
    static const CodePoints consonants = utf8_decode("бвгдзклмнпрстфхцчшж");
    static const CodePoints vowels = utf8_decode("аеиоуыэюя");
    for (;;) {
      const int n = min_syllables +
                    static_cast<int>(rng_.index(static_cast<std::uint64_t>(max_syllables - min_syllables + 1)));
      CodePoints w;
      for (int s = 0; s < n; ++s) {
        w.push_back(consonants[rng_.index(consonants.size())]);
        w.push_back(vowels[rng_.index(vowels.size())]);
        if (rng_.uniform() < 0.25) w.push_back(consonants[rng_.index(consonants.size())]);
      }
      if (capitalize && w[0] >= 0x0430 && w[0] <= 0x044F) w[0] -= 0x20;
      auto s = utf8_encode(w);
      if (used_.insert(s).second) return s;
    }
  }

 private:
  Rng rng_;
  std::set<std::string> used_;
};

}  // namespace

Language Language::pseudo(const World& world, std::string code, std::uint64_t seed,
                          bool adjective_after_noun, bool verb_final) {
  Language l;
  l.code = std::move(code);
  PseudoWordMaker maker(seed);
  auto fill = [&](std::vector<std::string>& v, int n, int lo, int hi, bool cap) {
    for (int i = 0; i < n; ++i) v.push_back(maker.make(lo, hi, cap));
  };
  l.preposition = maker.make(1, 1, false);
  fill(l.determiners, world.determiner_count(), 1, 1, false);
  fill(l.nouns, world.noun_count(), 1, 3, false);
  fill(l.verbs, world.verb_count(), 2, 3, false);
  fill(l.adjectives, world.adjective_count(), 2, 3, false);
  fill(l.adverbs, world.adverb_count(), 2, 3, false);
  fill(l.person_names, world.person_name_count(), 2, 3, true);
  fill(l.surnames, world.surname_count(), 2, 3, true);
  fill(l.place_names, world.place_name_count(), 2, 3, true);
  l.adjective_after_noun = adjective_after_noun;
  l.verb_final = verb_final;
  return l;
}

std::pair<std::vector<std::string>, std::vector<std::string>> Language::render_tagged(
    const Proposition& p, bool with_surname) const {
  std::vector<std::string> toks, tags;
  auto push = [&](const std::string& w, const char* tag) {
    toks.push_back(w);
    tags.emplace_back(tag);
  };
  auto noun_phrase = [&](int noun, int adj, const std::string& det) {
    push(det, "O");
    if (adj >= 0 && !adjective_after_noun) push(adjectives.at(static_cast<std::size_t>(adj)), "O");
    push(nouns.at(static_cast<std::size_t>(noun)), "O");
    if (adj >= 0 && adjective_after_noun) push(adjectives.at(static_cast<std::size_t>(adj)), "O");
  };
  auto subject = [&] {
    if (p.subject_name >= 0) {
      push(person_names.at(static_cast<std::size_t>(p.subject_name)), "B-PER");
      if (with_surname) {
        push(surnames.at(static_cast<std::size_t>(p.subject_name) % surnames.size()), "I-PER");
      }
    } else {
      noun_phrase(p.subject, p.subject_adj, determiners.at(static_cast<std::size_t>(p.determiner)));
    }
  };
  auto object = [&] {
    if (p.object >= 0) noun_phrase(p.object, p.object_adj, determiners.front());
  };
  subject();
  if (verb_final) {
    object();
    push(verbs.at(static_cast<std::size_t>(p.verb)), "O");
  } else {
    push(verbs.at(static_cast<std::size_t>(p.verb)), "O");
    object();
  }
  if (p.place_name >= 0) {
    push(preposition, "O");
    push(place_names.at(static_cast<std::size_t>(p.place_name)), "B-LOC");
  } else if (p.place >= 0) {
    push(preposition, "O");
    noun_phrase(p.place, -1, determiners.front());
  }
  if (p.adverb >= 0) push(adverbs.at(static_cast<std::size_t>(p.adverb)), "O");
  return {toks, tags};
}

std::string Language::render(const Proposition& p) const {
  const auto toks = render_tagged(p, false).first;
  std::string s;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

Corpus render_corpus(const Language& lang, const std::vector<std::vector<Proposition>>& docs) {
  Corpus c;
  for (const auto& d : docs) {
    Document doc;
    for (const auto& p : d) doc.push_back(lang.render(p));
    c.documents.push_back(std::move(doc));
  }
  return c;
}

}  // namespace xlab::corpuslab::toy
