#include "prada/eval/decode.hpp"

#include "prada/model/inference.hpp"
#include "prada/model/tokenizer.hpp"
#include "prada/teacher/teacher.hpp"
#include "prada/util/error.hpp"
#include "prada/util/text.hpp"

namespace prada::eval {
namespace {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

DecodeResult greedy_decode(const model::StudentModel& model, const std::string& q_formatted,
                           std::size_t max_new_tokens) {
  if (!ends_with(q_formatted, teacher::kQuestionSuffix)) {
    throw ContractError("greedy_decode: question must end with \"" + std::string(teacher::kQuestionSuffix) + "\"");
  }
  DecodeResult out;
  if (max_new_tokens == 0) {
    out.truncated = true;
    return out;
  }
  const model::CharTokenizer tok;
  const auto& cfg = model.config();
  const std::vector<std::size_t> prompt = tok.encode(q_formatted);
  if (prompt.size() + cfg.prompt_len >= cfg.max_seq) {
    throw model::LengthError("greedy_decode: question leaves no room to generate");
  }

  model::InferenceSession session(model);
  std::vector<double> logits = session.start(prompt);
  std::string generated;
  out.truncated = true;
  for (std::size_t i = 0; i < max_new_tokens; ++i) {
    const std::size_t next = argmax(logits);
    generated += tok.symbol(next);
    if (ends_with(generated, teacher::kCompletionEnd)) {
      out.truncated = false;
      break;
    }
    if (session.length() >= cfg.max_seq) break;
    logits = session.append(next);
  }
  if (!generated.empty() && generated.front() == ' ') generated.erase(0, 1);
  out.completion = std::move(generated);
  return out;
}

std::optional<std::string> extract_answer(const std::string& completion) {
  const std::string sep = teacher::kAnswerSeparator;
  const std::size_t at = completion.rfind(sep);
  if (at == std::string::npos) return std::nullopt;
  const std::size_t begin = at + sep.size();
  const std::size_t end = completion.find(teacher::kCompletionEnd, begin);
  if (end == std::string::npos) return std::nullopt;
  return trim(completion.substr(begin, end - begin));
}

}  // namespace prada::eval
