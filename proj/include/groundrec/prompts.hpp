// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <string_view>

namespace groundrec::prompts
{

/// Instructions given to the recommendation agent (the policy).
inline constexpr std::string_view recommendation_agent =
    "You are a helpful recommendation agent who provides well-reasoned and detailed responses.\n"
    "You must conduct reasoning inside <think> and </think> first every time you get new information.\n"
    "After reasoning, if you want to find items in the item database, you can call a grounding engine by using "
    "<ground> item title </ground>. It will return the top relevant items between <item_list> and </item_list>, "
    "as well as feedback from a user agent between <feedback> and </feedback>.\n"
    "You can use the feedback to conduct further reasoning inside <think> and </think>, or you may call the "
    "grounding engine again. You may repeat the reasoning and grounding process as many times as needed.\n"
    "If you find that no further external information is needed, you can directly provide one recommended item "
    "inside <answer> and </answer>.";

/// Injected once when the policy grounds past the configured cap.
inline constexpr std::string_view grounding_limit_notice = "grounding limit reached, provide your answer";

inline auto numbered(std::span<std::string const> titles) -> std::string
{
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i < titles.size(); ++i)
        out += std::to_string(i + 1) + ". " + titles[i] + "\n";
    return out;
}

/// User message opening every episode: the interaction history and the initial recall list.
inline auto episode_user_message(std::span<std::string const> history_titles,
                                 std::span<std::string const> recall_titles) -> std::string
{
    auto out = std::string("The user has interacted with the following items in chronological order:\n");
    out += numbered(history_titles);
    out += "\nCandidate items from an initial retrieval:\n";
    out += numbered(recall_titles);
    out += "\nRecommend the next item this user will interact with.";
    return out;
}

/// Prompt for the LLM user agent. `related_items` is the numbered list of grounded titles.
inline auto user_agent(std::span<std::string const> history_titles,
                       std::string_view given_title,
                       std::string_view related_items) -> std::string
{
    auto out = std::string("Act as a user agent.\n");
    out += "Record of items you've interacted with:\n";
    out += numbered(history_titles);
    out += "Now, you will be provided with an item title and a list of items from the database related to the "
           "item. Reflect on whether the item title is appropriate and provide feedback.\n"
           "Important rules:\n"
           "1. Summarize your interests based on your interaction history.\n"
           "2. Provide feedback on the item title in relation to your interests.\n"
           "3. Your feedback may affirm or deny the suitability of the given item title, or offer suggestions "
           "for improvement.\n"
           "4. You may incorporate the list of items related to the item title when providing feedback.\n";
    out += "Given item title: ";
    out += given_title;
    out += "\nList of items related to the title:\n";
    out += related_items;
    out += "Output your feedback.";
    return out;
}

} // namespace groundrec::prompts
