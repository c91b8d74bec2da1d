#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xlab::tokenizers {

inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::string_view kSep = "[SEP]";

std::string lang_sep_token(std::string_view lang);

/// Piece inventory. Specials occupy ids 0..special_count()-1 in the fixed
/// order [PAD] [UNK] [CLS] [MASK] [SEP] [SEP-<lang>]...
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> languages = {});

  /// Appends a regular piece. Throws std::invalid_argument on duplicates or
  /// an empty piece.
  std::int32_t add(std::string piece);

  std::size_t size() const { return pieces_.size(); }
  std::size_t special_count() const { return 5 + languages_.size(); }
  bool is_special(std::int32_t id) const {
    return id >= 0 && static_cast<std::size_t>(id) < special_count();
  }

  const std::string& piece(std::int32_t id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  std::optional<std::int32_t> find(std::string_view piece) const;
  std::int32_t id_or_unk(std::string_view piece) const;

  std::int32_t pad() const { return 0; }
  std::int32_t unk() const { return 1; }
  std::int32_t cls() const { return 2; }
  std::int32_t mask() const { return 3; }
  std::int32_t sep() const { return 4; }
  /// [SEP-<lang>]; throws std::out_of_range for an unknown language.
  std::int32_t sep_for(std::string_view lang) const;
  const std::vector<std::string>& languages() const { return languages_; }

  bool operator==(const Vocabulary& o) const { return pieces_ == o.pieces_; }

 private:
  std::vector<std::string> languages_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// Pieces with their log-probabilities, indexed by id. Specials carry 0.
struct ScoredVocabulary {
  Vocabulary vocab;
  std::vector<double> logp;
};

/// "<piece>\t<logp>" per line, specials first.
void save_vocab(const std::filesystem::path& path, const ScoredVocabulary& v);
/// Leading special lines must follow the canonical order; anything else is
/// an error that names the offending line.
ScoredVocabulary load_vocab(const std::filesystem::path& path);
ScoredVocabulary parse_vocab(std::string_view text);
std::string format_vocab(const ScoredVocabulary& v);

}  // namespace xlab::tokenizers
