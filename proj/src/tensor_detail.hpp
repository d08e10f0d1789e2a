#pragma once

// Internal helpers shared by the op implementation files.

#include <initializer_list>
#include <vector>

#include "ctxot/tensor.hpp"

namespace ctxot::detail {

inline Tape* joint_tape(const std::vector<const Tensor*>& ts) {
    Tape* tape = nullptr;
    for (const Tensor* t : ts) {
        if (!t->on_tape()) continue;
        if (tape == nullptr) {
            tape = t->tape();
        } else if (tape != t->tape()) {
            throw ArgumentError("op inputs belong to different tapes");
        }
    }
    return tape;
}

// Attaches `out` if any input is on a recording tape. `make_fn` runs after
// attachment so the closure it builds can capture the attached output.
template <class MakeFn>
void record(std::initializer_list<const Tensor*> inputs, Tensor& out, MakeFn make_fn) {
    std::vector<const Tensor*> in(inputs);
    Tape* tape = joint_tape(in);
    if (!tape || !tape->recording()) return;
    int id = tape->begin_node(in, out);
    tape->set_backward(id, make_fn());
}

template <class MakeFn>
void record_many(const std::vector<const Tensor*>& inputs, Tensor& out, MakeFn make_fn) {
    Tape* tape = joint_tape(inputs);
    if (!tape || !tape->recording()) return;
    int id = tape->begin_node(inputs, out);
    tape->set_backward(id, make_fn());
}

}  // namespace ctxot::detail
