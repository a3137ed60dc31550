#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "divek/category.hpp"
#include "divek/response_parser.hpp"

namespace divek {

// Open-ended recognition prompt used to draw the K step-1 rollouts. At
// training time callers pass only the base categories.
// Throws PreconditionError on an empty list.
QueryPrompt render_step1_prompt(const std::vector<CategoryName>& category_list,
                                std::string_view domain_noun);

// Multiple-choice prompt; options are rendered one per line as "A. name".
QueryPrompt render_mcq_prompt(const std::vector<LetteredOption>& options,
                              std::string_view domain_noun);

// Judge prompt asking whether prediction and ground truth denote the same
// fine-grained category.
std::string render_judge_prompt(std::string_view groundtruth, std::string_view prediction);

// "['a', 'b']" -- the list literal substituted into the step-1 template.
std::string format_category_list(const std::vector<CategoryName>& categories);

}  // namespace divek
