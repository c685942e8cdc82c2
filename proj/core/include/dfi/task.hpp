#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace dfi {

enum class Task { Saliency = 0, Edge = 1, Skeleton = 2 };

inline constexpr std::array<Task, 3> kAllTasks{Task::Saliency, Task::Edge, Task::Skeleton};

std::string_view task_name(Task task);
// Throws ConfigError for unknown names.
Task parse_task(std::string_view name);
std::vector<Task> parse_task_list(std::string_view comma_separated);

// Canonical order saliency, edge, skeleton; duplicates removed.
std::vector<Task> canonical_task_order(std::vector<Task> tasks);

}  // namespace dfi
