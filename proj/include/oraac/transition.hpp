#pragma once

#include "oraac/diffcore.hpp"

namespace oraac {

struct Transition {
    Vector state;
    Vector action;
    double reward = 0.0;
    Vector next_state;
    bool done = false;

    bool operator==(const Transition& other) const
    {
        return state == other.state && action == other.action && reward == other.reward &&
               next_state == other.next_state && done == other.done;
    }
};

/// B transitions laid out column-wise.
struct TransitionBatch {
    Matrix states;       // state_dim x B
    Matrix actions;      // action_dim x B
    Vector rewards;      // B
    Matrix next_states;  // state_dim x B
    Vector dones;        // B, 1.0 for terminal transitions

    Index size() const { return states.cols(); }

    static TransitionBatch from(const std::vector<const Transition*>& items)
    {
        TransitionBatch batch;
        const auto n = static_cast<Index>(items.size());
        if (n == 0)
            return batch;
        const Index sd = items.front()->state.size();
        const Index ad = items.front()->action.size();
        batch.states.resize(sd, n);
        batch.actions.resize(ad, n);
        batch.rewards.resize(n);
        batch.next_states.resize(sd, n);
        batch.dones.resize(n);
        for (Index i = 0; i < n; ++i) {
            const Transition& t = *items[static_cast<std::size_t>(i)];
            batch.states.col(i) = t.state;
            batch.actions.col(i) = t.action;
            batch.rewards(i) = t.reward;
            batch.next_states.col(i) = t.next_state;
            batch.dones(i) = t.done ? 1.0 : 0.0;
        }
        return batch;
    }
};

}  // namespace oraac
