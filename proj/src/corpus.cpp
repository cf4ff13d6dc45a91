#include "qattack/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "qattack/error.hpp"

namespace qattack {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

std::vector<std::string> QAExample::gold_texts() const {
  std::vector<std::string> out;
  out.reserve(gold_answers.size());
  for (const auto& a : gold_answers) out.push_back(a.text);
  return out;
}

TokenizedText tokenize(std::string_view raw) {
  TokenizedText out;
  out.raw = std::string(raw);
  size_t i = 0;
  while (i < raw.size()) {
    auto c = static_cast<unsigned char>(raw[i]);
    if (is_space(c)) {
      ++i;
    } else if (is_punct(c)) {
      out.tokens.emplace_back(1, raw[i]);
      out.offsets.emplace_back(i, i + 1);
      ++i;
    } else {
      size_t start = i;
      while (i < raw.size() && !is_space(raw[i]) && !is_punct(raw[i])) ++i;
      out.tokens.emplace_back(raw.substr(start, i - start));
      out.offsets.emplace_back(start, i);
    }
  }
  return out;
}

bool is_punctuation_token(std::string_view token) {
  return !token.empty() &&
         std::all_of(token.begin(), token.end(),
                     [](char c) { return is_punct(static_cast<unsigned char>(c)); });
}

TokenizedText join_tokens(const std::vector<std::string>& tokens) {
  TokenizedText out;
  for (const auto& t : tokens) {
    if (!out.raw.empty()) out.raw.push_back(' ');
    size_t start = out.raw.size();
    out.raw += t;
    out.tokens.push_back(t);
    out.offsets.emplace_back(start, out.raw.size());
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (is_punct(u)) continue;
    stripped.push_back(static_cast<char>(std::tolower(u)));
  }
  std::string out;
  std::istringstream words(stripped);
  std::string w;
  while (words >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

bool answer_matches(const TokenizedText& context, const AnswerSpan& answer) {
  return answer.char_start <= context.raw.size() &&
         context.raw.compare(answer.char_start, answer.text.size(), answer.text) == 0 &&
         answer.char_start + answer.text.size() <= context.raw.size();
}

size_t codepoint_to_byte(std::string_view text, size_t codepoint_index) {
  size_t byte = 0, cp = 0;
  while (byte < text.size() && cp < codepoint_index) {
    ++byte;
    while (byte < text.size() && (static_cast<unsigned char>(text[byte]) & 0xC0) == 0x80) ++byte;
    ++cp;
  }
  return byte;
}

size_t byte_to_codepoint(std::string_view text, size_t byte_index) {
  size_t cp = 0;
  byte_index = std::min(byte_index, text.size());
  for (size_t i = 0; i < byte_index; ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) ++cp;
  }
  return cp;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<QAExample> parse_squad(std::string_view json_text, const std::string& source_name) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParse, source_name + ": " + e.what());
  }
  if (!doc.contains("data") || !doc["data"].is_array()) {
    throw Error(ErrorKind::kParse, source_name + ": missing top-level \"data\" array");
  }

  std::vector<QAExample> out;
  std::unordered_set<std::string> seen;
  size_t article_index = 0;
  for (const auto& article : doc["data"]) {
    const std::string where = source_name + ": data[" + std::to_string(article_index++) + "]";
    if (!article.contains("paragraphs") || !article["paragraphs"].is_array()) {
      throw Error(ErrorKind::kParse, where + ": missing \"paragraphs\"");
    }
    for (const auto& para : article["paragraphs"]) {
      if (!para.contains("context") || !para["context"].is_string() || !para.contains("qas")) {
        throw Error(ErrorKind::kParse, where + ": paragraph without context/qas");
      }
      const std::string context_raw = para["context"].get<std::string>();
      TokenizedText context = tokenize(context_raw);
      for (const auto& qa : para["qas"]) {
        std::string id = qa.value("id", std::string());
        const std::string rec = where + " record '" + id + "'";
        if (id.empty() || !qa.contains("question") || !qa["question"].is_string()) {
          throw Error(ErrorKind::kParse, rec + ": missing id or question");
        }
        if (qa.value("is_impossible", false) || !qa.contains("answers") ||
            !qa["answers"].is_array() || qa["answers"].empty()) {
          throw Error(ErrorKind::kParse,
                      rec + ": empty answers (SQuAD v2.0 unsupported)");
        }
        if (!seen.insert(id).second) {
          throw Error(ErrorKind::kParse, rec + ": duplicate id");
        }
        QAExample ex;
        ex.id = id;
        ex.question = tokenize(qa["question"].get<std::string>());
        ex.context = context;
        for (const auto& ans : qa["answers"]) {
          if (!ans.contains("text") || !ans.contains("answer_start") ||
              !ans["text"].is_string() || !ans["answer_start"].is_number_integer()) {
            throw Error(ErrorKind::kParse, rec + ": malformed answer");
          }
          AnswerSpan span;
          span.text = ans["text"].get<std::string>();
          auto cp = ans["answer_start"].get<long long>();
          if (cp < 0) throw Error(ErrorKind::kParse, rec + ": negative answer_start");
          span.char_start = codepoint_to_byte(context_raw, static_cast<size_t>(cp));
          if (!answer_matches(ex.context, span)) {
            throw Error(ErrorKind::kParse,
                        rec + ": answer '" + span.text + "' not found at answer_start");
          }
          ex.gold_answers.push_back(std::move(span));
        }
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<QAExample> load_squad(const std::filesystem::path& path) {
  return parse_squad(read_file(path), path.string());
}

std::string serialize_squad(const std::vector<QAExample>& examples) {
  nlohmann::ordered_json paragraphs = nlohmann::ordered_json::array();
  for (const auto& ex : examples) {
    if (paragraphs.empty() || paragraphs.back()["context"] != ex.context.raw) {
      paragraphs.push_back({{"context", ex.context.raw}, {"qas", nlohmann::ordered_json::array()}});
    }
    nlohmann::ordered_json answers = nlohmann::ordered_json::array();
    for (const auto& a : ex.gold_answers) {
      answers.push_back({{"text", a.text},
                         {"answer_start", byte_to_codepoint(ex.context.raw, a.char_start)}});
    }
    paragraphs.back()["qas"].push_back(
        {{"id", ex.id}, {"question", ex.question.raw}, {"answers", answers}});
  }
  nlohmann::ordered_json doc = {
      {"version", "1.1"},
      {"data", nlohmann::ordered_json::array({{{"title", "examples"}, {"paragraphs", paragraphs}}})}};
  return doc.dump(1);
}

CorpusStore make_corpus(std::vector<TokenizedText> paragraphs) {
  CorpusStore store;
  store.paragraphs = std::move(paragraphs);
  for (const auto& p : store.paragraphs) {
    store.token_pool.insert(store.token_pool.end(), p.tokens.begin(), p.tokens.end());
  }
  return store;
}

CorpusStore load_corpus(const std::filesystem::path& path, size_t min_tokens) {
  const std::string text = read_file(path);
  std::vector<TokenizedText> paragraphs;
  std::string current;
  auto flush = [&] {
    std::string para = trim(current);
    current.clear();
    if (para.empty()) return;
    TokenizedText t = tokenize(para);
    if (t.size() >= min_tokens) paragraphs.push_back(std::move(t));
  };
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  flush();
  if (paragraphs.empty()) {
    throw Error(ErrorKind::kValidation,
                path.string() + ": no paragraph with at least " + std::to_string(min_tokens) +
                    " tokens");
  }
  return make_corpus(std::move(paragraphs));
}

WordList parse_wordlist(std::string_view text) {
  WordList list;
  std::unordered_set<std::string> seen;
  std::istringstream lines{std::string(text)};
  std::string line;
  size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    std::string word = to_lower(trim(line));
    if (word.empty()) continue;
    if (tokenize(word).size() != 1) {
      throw Error(ErrorKind::kParse,
                  "word list line " + std::to_string(lineno) + " is not a single token: " + word);
    }
    if (seen.insert(word).second) list.words.push_back(std::move(word));
  }
  if (list.words.empty()) throw Error(ErrorKind::kValidation, "word list is empty");
  return list;
}

WordList load_wordlist(const std::filesystem::path& path) {
  return parse_wordlist(read_file(path));
}

}  // namespace qattack
