"""Deterministic rule-based provider for offline sessions.

Not an LLM: a fixed heuristic responder keyed by template id, so the CLI
and demos run end to end with no network or API key. Tests use the
scripted provider instead; this one exists for usability.
"""

from __future__ import annotations

import json
import re

from .gateway import ProviderProfile

_BUILD_WORDS = (
    "predict", "build", "train", "fit", "classif", "regress", "forecast",
    "model", "pipeline", "solve", "automl", "estimate",
)
_END_WORDS = ("quit", "exit", "goodbye", "bye", "end session", "end the session", "stop the session")
_REGRESSION_WORDS = ("price", "value", "amount", "how much", "regression", "continuous", "sales", "revenue")

_MODELING_FILL = '''def fit_model(train_frame):
    from sklearn.compose import ColumnTransformer
    from sklearn.ensemble import GradientBoostingClassifier, GradientBoostingRegressor
    from sklearn.impute import SimpleImputer
    from sklearn.pipeline import Pipeline
    from sklearn.preprocessing import OneHotEncoder

    y = train_frame[TARGET]
    X = train_frame.drop(columns=[TARGET])
    num_cols = X.select_dtypes(include="number").columns.tolist()
    cat_cols = [c for c in X.columns if c not in num_cols]
    transform = ColumnTransformer(
        [
            ("num", SimpleImputer(strategy="median"), num_cols),
            ("cat", Pipeline([
                ("impute", SimpleImputer(strategy="most_frequent")),
                ("onehot", OneHotEncoder(handle_unknown="ignore", sparse_output=False)),
            ]), cat_cols),
        ],
        remainder="drop",
    )
    if TASK_KIND == "classification":
        est = GradientBoostingClassifier(random_state=SEED)
    else:
        est = GradientBoostingRegressor(random_state=SEED)
    model = Pipeline([("prep", transform), ("est", est)])
    model.fit(X, y)
    return model


def predict_model(model, frame):
    if TASK_KIND == "classification" and METRIC in ("auc", "logloss"):
        return model.predict_proba(frame)[:, 1]
    return model.predict(frame)'''


class OfflineProvider:
    """Heuristic responder; one deterministic answer per template."""

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str, profile: ProviderProfile, template_id: str | None) -> str:
        self.calls += 1
        handler = getattr(self, f"_{template_id}", None) if template_id else None
        if handler is None:
            return "OK."
        return handler(prompt)

    # -- routing and dispatch -------------------------------------------------

    def _dispatch(self, prompt: str) -> str:
        query = _after(prompt, "Latest message:").lower()
        if any(w in query for w in _END_WORDS):
            return "END"
        if any(w in query for w in _BUILD_WORDS):
            return "BUILD"
        return "INTERACT"

    def _automl_router(self, prompt: str) -> str:
        query = _after(prompt, "User's request:").lower()
        if "lightautoml" in query or re.search(r"\blama\b", query):
            return "LAMA"
        if "fedot" in query:
            return "FEDOT"
        if "automl" in query:
            return "LAMA"  # deterministic tie-break
        return "NO"

    def _automl_config(self, prompt: str) -> str:
        task = _after(prompt, "User's task:")
        columns = [c.strip() for c in _after(prompt, "Column names:").split(",") if c.strip()]
        target = _pick_target(task, columns)
        task_type = "reg" if any(w in task.lower() for w in _REGRESSION_WORDS) else "binary"
        metric = "r2-score" if task_type == "reg" else "auc"
        return "```\n" + json.dumps({"task_type": task_type, "target": target, "task_metric": metric}) + "\n```"

    # -- analysis --------------------------------------------------------------

    def _reflection(self, prompt: str) -> str:
        task_block = _between(prompt, "# Available Data File And Content in The File", "# EDA")
        eda_block = prompt.split("# EDA", 1)[-1]
        task_line = task_block.strip().splitlines()[0] if task_block.strip() else "the task"

        kinds: dict[str, list[str]] = {"ID": [], "NUMERICAL": [], "CATEGORICAL": [], "DATETIME": []}
        distinct: dict[str, int] = {}
        for m in re.finditer(r"^- (.+?) \((ID|NUMERICAL|CATEGORICAL|DATETIME)\): distinct=(\d+)", eda_block, re.M):
            kinds[m.group(2)].append(m.group(1))
            distinct[m.group(1)] = int(m.group(3))
        candidates = [
            c.strip()
            for c in _after(eda_block, "target candidates:").split(",")
            if c.strip() and c.strip() != "(none)"
        ]
        target = _pick_target(task_line, candidates, default="first") if candidates else "(unknown)"
        if target != "(unknown)" and distinct.get(target) == 2:
            metric = "auc"
        elif target in kinds["NUMERICAL"]:
            metric = "rmse"
        else:
            metric = "accuracy"
        files = re.findall(r"([\w\-]+\.(?:csv|xlsx|parquet))", task_block) or ["train.csv"]

        return f"""1. Competition Overview: {task_line}
2. Files: {files[0]}: training data with features and the target column.
3. Problem Definition: build a supervised model that predicts {target} from the remaining columns.
4. Data Information:
    4.1 Data type:
        4.1.1. ID type: {', '.join(kinds['ID']) or '(none)'}
        4.1.2. Numerical type: {', '.join(kinds['NUMERICAL']) or '(none)'}
        4.1.3. Categorical type: {', '.join(kinds['CATEGORICAL']) or '(none)'}
        4.1.4 Datetime type: {', '.join(kinds['DATETIME']) or '(none)'}
    4.2 Detailed data description: see the EDA profile.
5. Target Variable: {target}
6. Evaluation Metrics: {metric}
7. Submission Format: submission.csv with one prediction per validation row.
8. Other Key Aspects: none.
"""

    def _planner(self, prompt: str) -> str:
        return (
            "1. preprocessing: impute missing values and encode categorical features\n"
            "2. model_fitting: fit a gradient boosting model on the training fold\n"
            "3. validation: score the model on the held-out fold\n"
            "4. submission_writing: write predictions to the submission file\n"
        )

    # -- code ------------------------------------------------------------------

    def _codegen(self, prompt: str) -> str:
        skeleton = _first_fence(prompt)
        if skeleton is None:
            return "```python\nraise SystemExit('no skeleton provided')\n```"
        code = _fill_region(skeleton, "modeling", _MODELING_FILL)
        return "```python\n" + code + "\n```"

    def _fix_solution(self, prompt: str) -> str:
        code = _between(prompt, "# Previous Python Solution\n```python\n", "\n```")
        return "```python\n" + (code or "pass") + "\n```"

    def _gen_params(self, prompt: str) -> str:
        m = re.search(r"(\d+)[ -]second", prompt)
        budget = int(m.group(1)) if m else 300
        return json.dumps({"time_budget": budget})

    # -- reporting ----------------------------------------------------------------

    def _reporter(self, prompt: str) -> str:
        code = _first_fence(prompt, language="python") or "# code unavailable"
        metrics = _between(prompt, "performance metric `", "`") or "{}"
        pipeline = _between(prompt, "steps in `", "`") or "the pipeline"
        return f"""# Overview
- We built an automated solution for the task and verified it on held-out data.

# Data Preprocessing
- Missing values were filled in and text categories were turned into numbers.

# Pipeline Summary
- {pipeline}

# Code Highlights
```python
{code}
```

# Metrics
- `{metrics}`

# Takeaways
- The model runs end to end and its quality on unseen rows is reported above.
"""

    def _interact(self, prompt: str) -> str:
        return (
            "I build and explain machine learning pipelines for tabular data. "
            "Upload a dataset and describe what to predict, and I will plan, "
            "generate, validate and score a solution, or configure an AutoML "
            "engine if you ask for one."
        )

    def _step_summary(self, prompt: str) -> str:
        from .reporting import fallback_summary

        step = _after(prompt, "Step:").strip()
        return fallback_summary(step)


def _after(text: str, marker: str) -> str:
    idx = text.find(marker)
    if idx == -1:
        return ""
    return text[idx + len(marker) :].split("\n", 1)[0].strip()


def _between(text: str, start: str, end: str) -> str:
    i = text.find(start)
    if i == -1:
        return ""
    j = text.find(end, i + len(start))
    if j == -1:
        return ""
    return text[i + len(start) : j]


_FENCE = re.compile(r"```([a-zA-Z0-9_-]*)\n(.*?)```", re.DOTALL)


def _first_fence(text: str, language: str | None = None) -> str | None:
    for m in _FENCE.finditer(text):
        if language is None or m.group(1) == language:
            return m.group(2)
    return None


def _fill_region(code: str, label: str, inner: str) -> str:
    start = f"### USER CODE: {label} ###"
    end = f"### END USER CODE: {label} ###"
    i = code.find(start)
    j = code.find(end, i)
    if i == -1 or j == -1:
        return code
    return code[: i + len(start)] + "\n" + inner + "\n" + code[j:]


def _pick_target(task: str, columns: list[str], default: str = "last") -> str:
    lowered = task.lower()
    for col in columns:
        if re.search(rf"(?<![\w]){re.escape(col.lower())}(?![\w])", lowered):
            return col
    if not columns:
        return "(unknown)"
    return columns[0] if default == "first" else columns[-1]
