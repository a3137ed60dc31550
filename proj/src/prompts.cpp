#include "divek/prompts.hpp"

#include "divek/errors.hpp"

namespace divek {

std::string format_category_list(const std::vector<CategoryName>& categories) {
  std::string out = "[";
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (i) out += ", ";
    out += '\'';
    out += categories[i].raw;
    out += '\'';
  }
  out += ']';
  return out;
}

QueryPrompt render_step1_prompt(const std::vector<CategoryName>& category_list,
                                std::string_view domain_noun) {
  if (category_list.empty()) throw PreconditionError("step-1 prompt needs at least one category");
  const std::string noun(domain_noun);
  std::string text;
  text += "<image> This is an image containing a " + noun +
          ". Output the most likely species name in the image. The species name of the " + noun +
          " strictly belongs to below category list " + format_category_list(category_list) +
          ".\n";
  text += "Output the thinking process in <think> </think> and final answer in <answer> </answer> tags.\n";
  text += "The output answer format should be as follows: <think> ... </think> <answer> species name </answer>.\n";
  text += "Please strictly follow the format.";
  return QueryPrompt{std::string(templates::kStep1), std::move(text), category_list};
}

QueryPrompt render_mcq_prompt(const std::vector<LetteredOption>& options,
                              std::string_view domain_noun) {
  if (options.empty()) throw PreconditionError("MCQ prompt needs at least one option");
  const std::string noun(domain_noun);
  std::string lines;
  std::vector<CategoryName> ordered;
  for (const auto& [letter, name] : options) {
    lines += '\n';
    lines += letter;
    lines += ". ";
    lines += name.raw;
    ordered.push_back(name);
  }
  std::string text;
  text += "This is an image containing a " + noun + ". Please find the most likely " + noun +
          " in the image from the below options." + lines + ".\n";
  text += "Please output the letter corresponding to the correct category name.\n";
  text += "Output the thinking process in <think> </think> and final answer in <answer> </answer> tags.\n";
  text += "The output answer format should be as follows:\n<think> ... </think> <answer>option letter</answer>\n";
  text += "Please strictly follow the format.";
  return QueryPrompt{std::string(templates::kMcq), std::move(text), std::move(ordered)};
}

std::string render_judge_prompt(std::string_view groundtruth, std::string_view prediction) {
  std::string text;
  text += "You are evaluating fine-grained image classification results.\n";
  text += "Given:\n";
  text += "- Groundtruth category: " + std::string(groundtruth) + "\n";
  text += "- LLM prediction: " + std::string(prediction) + "\n";
  text += "Check if the groundtruth matches the prediction. The strings need not match exactly "
          "but they must refer to the same specific fine-grained category, not just broad class.\n";
  text += "Respond with:\n";
  text += "1. \"True\" or \"False\" if groundtruth matches the prediction in <answer></answer> tag. "
          "i.e <answer>answer here (True/False)</answer>\n";
  text += "2. Brief explanation in <explanation></explanation> tag. "
          "i.e <explanation>Explanation here</explanation>\n";
  return text;
}

}  // namespace divek
