#pragma once

// Text ingestion: tokenization, SQuAD v1.1 loading, answer normalization,
// word lists and paragraph corpora.
//
// All character offsets in this library are byte offsets into UTF-8 strings.
// SQuAD files and the remote-model wire format count Unicode code points;
// the loaders and the HTTP client convert at the boundary.

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qattack {

struct TokenizedText {
  std::string raw;
  std::vector<std::string> tokens;
  std::vector<std::pair<size_t, size_t>> offsets;  // [start, end) into raw

  size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

struct AnswerSpan {
  std::string text;
  size_t char_start = 0;
};

struct QAExample {
  std::string id;
  TokenizedText question;
  TokenizedText context;
  std::vector<AnswerSpan> gold_answers;

  std::vector<std::string> gold_texts() const;
};

struct WordList {
  std::vector<std::string> words;
};

struct CorpusStore {
  std::vector<TokenizedText> paragraphs;
  std::vector<std::string> token_pool;
};

// Whitespace split with every ASCII punctuation character emitted as its own
// token. Bytes >= 0x80 count as word characters.
TokenizedText tokenize(std::string_view raw);

bool is_punctuation_token(std::string_view token);

// Builds a TokenizedText whose raw string is `tokens` joined by single spaces.
TokenizedText join_tokens(const std::vector<std::string>& tokens);

// Official SQuAD normalization: lowercase, strip punctuation, drop the
// articles a/an/the, collapse whitespace.
std::string normalize_answer(std::string_view text);

// True when `context.raw` holds `answer.text` at `answer.char_start`.
bool answer_matches(const TokenizedText& context, const AnswerSpan& answer);

std::vector<QAExample> load_squad(const std::filesystem::path& path);
std::vector<QAExample> parse_squad(std::string_view json_text,
                                   const std::string& source_name);
std::string serialize_squad(const std::vector<QAExample>& examples);

inline constexpr size_t kDefaultMinParagraphTokens = 40;

CorpusStore load_corpus(const std::filesystem::path& path,
                        size_t min_tokens = kDefaultMinParagraphTokens);
CorpusStore make_corpus(std::vector<TokenizedText> paragraphs);

WordList load_wordlist(const std::filesystem::path& path);
WordList parse_wordlist(std::string_view text);

std::string read_file(const std::filesystem::path& path);

// Code point <-> byte offset conversion for UTF-8 text. Offsets past the end
// clamp to the string size.
size_t codepoint_to_byte(std::string_view text, size_t codepoint_index);
size_t byte_to_codepoint(std::string_view text, size_t byte_index);

}  // namespace qattack
