#pragma once

// Hand-built untyped domain pairs for exploration-walk checks. Both pairs
// share the reference `chain` and the task "reach (r o1)" whose reference
// plan uses both operators.

namespace domlearn::testing {

inline const char* kChainReference = R"((define (domain chain)
  (:requirements :strips)
  (:predicates (p ?x) (q ?x) (r ?x) (s ?x))
  (:action a :parameters (?x) :precondition (p ?x) :effect (and (q ?x) (not (p ?x))))
  (:action b :parameters (?x) :precondition (q ?x) :effect (and (r ?x) (not (q ?x))))))";

/// b additionally needs (s ?x), which never holds.
inline const char* kChainStrictB = R"((define (domain chain_strict_b)
  (:requirements :strips)
  (:predicates (p ?x) (q ?x) (r ?x) (s ?x))
  (:action a :parameters (?x) :precondition (p ?x) :effect (and (q ?x) (not (p ?x))))
  (:action b :parameters (?x) :precondition (and (q ?x) (s ?x)) :effect (and (r ?x) (not (q ?x))))))";

/// a forgets to delete (p ?x); b needs (s ?x).
inline const char* kChainSticky = R"((define (domain chain_sticky)
  (:requirements :strips)
  (:predicates (p ?x) (q ?x) (r ?x) (s ?x))
  (:action a :parameters (?x) :precondition (p ?x) :effect (q ?x))
  (:action b :parameters (?x) :precondition (and (q ?x) (s ?x)) :effect (and (r ?x) (not (q ?x))))))";

inline const char* kChainTaskNoS = R"((define (problem reach) (:domain chain)
  (:objects o1 o2)
  (:init (p o1) (p o2))
  (:goal (r o1))))";

inline const char* kChainTaskS1 = R"((define (problem reach_s) (:domain chain)
  (:objects o1 o2)
  (:init (p o1) (p o2) (s o1))
  (:goal (r o1))))";

}  // namespace domlearn::testing
