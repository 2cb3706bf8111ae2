#pragma once

#include <json.hpp>

#include "mmaml/tasks.hpp"

namespace mmaml {

inline nlohmann::json task_spec_to_json(const TaskSpec& s) {
    nlohmann::json params;
    switch (s.mode) {
        case FunctionMode::Sinusoidal: params = {{"A", s.A}, {"w", s.w}, {"b", s.b}}; break;
        case FunctionMode::Linear: params = {{"A", s.A}, {"b", s.b}}; break;
        default: params = {{"A", s.A}, {"c", s.c}, {"b", s.b}}; break;
    }
    return {{"mode", mode_name(s.mode)}, {"params", params}};
}

inline nlohmann::json task_sample_to_json(const TaskSample& t, std::size_t task_id) {
    auto pts = [](const std::vector<Point>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Point& p : v) arr.push_back({p.x, p.y});
        return arr;
    };
    nlohmann::json j = task_spec_to_json(t.spec);
    j["task_id"] = task_id;
    j["mode_label"] = t.mode_label;
    j["support"] = pts(t.support);
    j["query"] = pts(t.query);
    return j;
}

}  // namespace mmaml
