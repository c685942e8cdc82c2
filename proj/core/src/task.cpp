#include "dfi/task.hpp"

#include <algorithm>
#include <sstream>

#include "dfi/error.hpp"

namespace dfi {

std::string_view task_name(Task task) {
  switch (task) {
    case Task::Saliency: return "saliency";
    case Task::Edge: return "edge";
    case Task::Skeleton: return "skeleton";
  }
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (Task t : kAllTasks)
    if (task_name(t) == name) return t;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected saliency, edge or skeleton)");
}

std::vector<Task> parse_task_list(std::string_view comma_separated) {
  std::vector<Task> out;
  std::stringstream ss{std::string(comma_separated)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_task(item));
  }
  if (out.empty()) throw ConfigError("empty task list");
  return canonical_task_order(std::move(out));
}

std::vector<Task> canonical_task_order(std::vector<Task> tasks) {
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());
  return tasks;
}

}  // namespace dfi
