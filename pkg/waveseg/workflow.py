"""
Workflow Orchestration using LangGraph
Runs the dual-structure comparison as a pipeline of stages.
"""

from langgraph.graph import StateGraph, END

from waveseg.dataset import gen_dataset
from waveseg.errors import ArgumentError, DivergenceError, WaveSegError
from waveseg.state import ComparisonState, StageTrace
from waveseg.wadsnet import build_net, comparison_rows, evaluate, pooled_confusions, summarize, train

# held-out samples are drawn from a seed this far from the training seed
TEST_SEED_OFFSET = 1_000_003


def _step(state: ComparisonState, stage: str, action: str, outcome: str) -> dict:
    current_step = state.get("current_step", 0)
    trace_entry = StageTrace(step=current_step + 1, stage=stage, action=action, outcome=outcome)
    return {"trace": [trace_entry], "current_step": current_step + 1}


def run_generator(state: ComparisonState) -> dict:
    """Build one training split and one held-out split per seed."""
    size = state["image_size"]
    try:
        datasets = {
            seed: (
                gen_dataset(state["num_train"], size, size, seed),
                gen_dataset(state["num_test"], size, size, seed + TEST_SEED_OFFSET),
            )
            for seed in state["seeds"]
        }
    except WaveSegError as exc:
        return {
            "errors": (state.get("errors") or []) + [f"generate: {exc}"],
            **_step(state, "Generator", "Generated synthetic splits", f"Failed: {exc}"),
        }
    return {
        "datasets": datasets,
        **_step(state, "Generator", "Generated synthetic splits",
                f"{len(datasets)} seeds x ({state['num_train']} train, {state['num_test']} test) "
                f"at {size}x{size}"),
    }


def run_trainer(state: ComparisonState) -> dict:
    """Train every kind on every seed's training split."""
    nets, logs = {}, {}
    for seed, (train_set, _) in state["datasets"].items():
        for kind in state["kinds"]:
            net = build_net(kind, state["wavelet"], seed, mode=state["mode"])
            try:
                logs[f"{kind}/{seed}"] = train(
                    net, train_set, epochs=state["epochs"], lr=state["lr"], verbose=state["verbose"]
                )
            except DivergenceError as exc:
                logs[f"{kind}/{seed}"] = exc.log
                return {
                    "logs": logs,
                    "divergence": exc,
                    **_step(state, "Trainer", f"Trained {kind} (seed {seed})", f"Diverged: {exc}"),
                }
            nets[(kind, seed)] = net

    final = {k: log[-1]["pixel_acc"] for k, log in logs.items() if log}
    worst = min(final.values()) if final else float("nan")
    return {
        "nets": nets,
        "logs": logs,
        **_step(state, "Trainer", f"Trained {len(nets)} networks for {state['epochs']} epochs",
                f"Lowest final train pixel accuracy {worst:.3f}"),
    }


def run_evaluator(state: ComparisonState) -> dict:
    """Confusion matrix of each network on its seed's held-out split."""
    confusions = {
        (kind, seed): evaluate(net, state["datasets"][seed][1])
        for (kind, seed), net in state["nets"].items()
    }
    return {
        "confusions": confusions,
        **_step(state, "Evaluator", "Evaluated on held-out splits", f"{len(confusions)} confusion matrices"),
    }


def run_reporter(state: ComparisonState) -> dict:
    """Per-class IoU rows plus medians over seeds."""
    confusions = state["confusions"]
    param_counts = {kind: net.parameter_count() for (kind, _), net in state["nets"].items()}
    rows = comparison_rows(confusions)
    per_class, per_kind = summarize(confusions, param_counts)

    thin = per_class[per_class["class"] == "thin-line"].set_index("kind")["median_IoU"]
    outcome = ", ".join(f"{kind} thin-line IoU {value:.3f}" for kind, value in thin.items())
    return {
        "rows": rows,
        "summary": {"per_class": per_class, "per_kind": per_kind, "pooled": pooled_confusions(confusions)},
        **_step(state, "Reporter", f"Built {len(rows)} report rows", outcome or "No thin-line rows"),
    }


def _after_generate(state: ComparisonState) -> str:
    return "stop" if state.get("errors") else "continue"


def _after_train(state: ComparisonState) -> str:
    return "stop" if state.get("divergence") is not None else "continue"


def create_workflow():
    """
    Create the comparison workflow graph.

    The flow is:
    START → Generator → Trainer → Evaluator → Reporter → END

    A failed generation or a diverged training run ends the graph early.

    Returns:
        Compiled LangGraph workflow
    """
    workflow = StateGraph(ComparisonState)

    workflow.add_node("generator", run_generator)
    workflow.add_node("trainer", run_trainer)
    workflow.add_node("evaluator", run_evaluator)
    workflow.add_node("reporter", run_reporter)

    workflow.set_entry_point("generator")
    workflow.add_conditional_edges("generator", _after_generate, {"continue": "trainer", "stop": END})
    workflow.add_conditional_edges("trainer", _after_train, {"continue": "evaluator", "stop": END})
    workflow.add_edge("evaluator", "reporter")
    workflow.add_edge("reporter", END)

    return workflow.compile()


def run_comparison(
    seeds, kinds, wavelet: str, mode: str, epochs: int,
    num_train: int, num_test: int, image_size: int, lr: float, verbose: bool = False,
) -> dict:
    """
    Run the full comparison.

    Returns:
        Final state with rows, summary and trace

    Raises:
        DivergenceError: a training run diverged (after the trace is complete)
        ArgumentError: a stage rejected its inputs
    """
    workflow = create_workflow()

    initial_state = {
        "seeds": list(seeds),
        "kinds": list(kinds),
        "wavelet": wavelet,
        "mode": mode,
        "epochs": epochs,
        "num_train": num_train,
        "num_test": num_test,
        "image_size": image_size,
        "lr": lr,
        "verbose": verbose,
        "datasets": None,
        "nets": None,
        "logs": None,
        "divergence": None,
        "confusions": None,
        "rows": None,
        "summary": None,
        "trace": [],
        "current_step": 0,
        "errors": None,
    }

    final_state = workflow.invoke(initial_state)

    if final_state.get("divergence") is not None:
        divergence = final_state["divergence"]
        divergence.trace = list(final_state["trace"])
        divergence.logs = dict(final_state["logs"] or {})
        raise divergence
    if final_state.get("errors"):
        raise ArgumentError("; ".join(final_state["errors"]))
    return final_state


def format_trace_table(trace: list) -> str:
    """
    Format the trace as a markdown table.

    Args:
        trace: List of StageTrace entries

    Returns:
        Formatted table string
    """
    if not trace:
        return "No trace entries."

    table = "| Step | Stage | Action | Outcome |\n"
    table += "|------|-------|--------|---------|\n"
    for entry in trace:
        table += f"| {entry['step']} | {entry['stage']} | {entry['action']} | {entry['outcome']} |\n"
    return table
