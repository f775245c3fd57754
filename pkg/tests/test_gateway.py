from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lads.errors import (
    GatewayError,
    MalformedJson,
    MissingBinding,
    MissingKeys,
    UnknownTemplate,
    UnparseableToken,
)
from lads.gateway import (
    LLMGateway,
    PromptTemplate,
    ProviderProfile,
    ScriptedExchange,
    ScriptedProvider,
    TransientProviderError,
    load_builtin_templates,
    normalize_token,
)

from conftest import make_gateway


class TestTemplates:
    def test_builtin_templates_load(self):
        templates = load_builtin_templates()
        for expected in (
            "codegen",
            "automl_config",
            "automl_router",
            "fix_solution",
            "gen_params",
            "reflection",
            "reporter",
            "dispatch",
            "interact",
            "planner",
            "step_summary",
        ):
            assert expected in templates

    def test_render_substitutes_all_placeholders(self, scripted):
        gateway, _ = scripted
        out = gateway.render(
            "automl_config",
            {
                "task": "predict price",
                "file_name": "train.csv",
                "df_columns": "a, b, SalePrice",
                "df_head": "a b SalePrice\n1 2 100",
            },
        )
        for value in ("predict price", "train.csv", "a, b, SalePrice", "1 2 100"):
            assert value in out
        assert "{task}" not in out and "{df_head}" not in out

    def test_render_missing_binding(self, scripted):
        gateway, _ = scripted
        with pytest.raises(MissingBinding) as err:
            gateway.render(
                "fix_solution",
                {
                    "reflection": "r",
                    "dataset_path": "d",
                    "code_recent_solution": "c",
                    "msg_section": "",
                    "stdout": "out",
                },
            )
        assert err.value.name == "stderr"

    def test_render_unknown_template(self, scripted):
        gateway, _ = scripted
        with pytest.raises(UnknownTemplate):
            gateway.render("nope", {})

    def test_reporter_contains_outline_headers(self, scripted):
        gateway, _ = scripted
        out = gateway.render("reporter", {"pipeline": "p", "code": "c", "metrics": "m"})
        for header in ("Overview", "Data Preprocessing", "Pipeline Summary",
                       "Code Highlights", "Metrics", "Takeaways"):
            assert header in out

    def test_shipped_prompt_wire_phrases_frozen(self):
        # the downstream protocols parse outputs these instructions elicit;
        # the phrases are load-bearing and must not drift
        templates = load_builtin_templates()
        frozen = {
            "automl_router": [
                'respond with the single word "NO"',
                'If LightAutoML is specified, respond with the single word "LAMA"',
                'If Fedot is specified, respond with the single word "FEDOT"',
                'respond with the single word "LAMA" or "FEDOT", you can choose',
            ],
            "automl_config": [
                "Always respond only in the JSON format",
                '(task_metric) "r2-score" and the task type (task_type) "reg"',
                '(task_metric) "auc" and the task type (task_type) "binary"',
                '"task_type": ""',
                '"target": ""',
                '"task_metric": ""',
            ],
            "codegen": [
                "Do **not delete any comments**",
                "Do **not modify code enclosed between** the designated markers",
                "(`### comment ### code ### comment ###`)",
                "only within the 'USER CODE' sections",
                "must begin with a Python code block",
            ],
            "fix_solution": [
                "Identify and correct the specific error that caused the failure without altering any other logic",
                "# Execution Output",
                "# Error Trace",
            ],
            "gen_params": [
                "define the optimal parameters for an automated machine learning model fitting framework",
                "use default values that are commonly accepted as best practices",
            ],
            "reflection": [
                "conduct a comprehensive analysis of the competition",
                "ID type: features that are unique identifiers",
                "Numerical type: features that are numerical values",
                "5. Target Variable",
                "6. Evaluation Metrics",
                "7. Submission Format",
                "8. Other Key Aspects",
            ],
            "reporter": [
                "styled like a Substack blog summary",
                "Share performance metric `{metrics}`",
            ],
        }
        for template_id, phrases in frozen.items():
            body = templates[template_id].body
            for phrase in phrases:
                assert phrase in body, f"{template_id}: missing frozen phrase {phrase!r}"

    def test_substitution_is_literal_not_recursive(self, config):
        gateway, _ = make_gateway(config)
        gateway.register_template("t", "value: {a} and {b}")
        out = gateway.render("t", {"a": "{b}", "b": "x"})
        # the injected "{b}" is not re-expanded
        assert out == "value: {b} and x"

    @given(
        bindings=st.fixed_dictionaries(
            {
                "task": st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40),
                "file_name": st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40),
                "df_columns": st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40),
                "df_head": st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40),
            }
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_no_placeholder_survives(self, bindings):
        gateway = LLMGateway(provider=ScriptedProvider(), templates=load_builtin_templates())
        out = gateway.render("automl_config", bindings)
        for name in ("task", "file_name", "df_columns", "df_head"):
            assert "{" + name + "}" not in out


class TestScriptedProvider:
    def test_exact_response(self, config):
        gateway, provider = make_gateway(config)
        provider.add("hello back", template_id="interact")
        assert gateway.complete("hi", template_id="interact") == "hello back"
        assert provider.calls == 1

    def test_unmatched_fails_loudly(self, config):
        gateway, _ = make_gateway(config)
        with pytest.raises(GatewayError, match="no scripted exchange"):
            gateway.complete("hi", template_id="interact")

    def test_ambiguous_fails_loudly(self, config):
        gateway, provider = make_gateway(config)
        provider.add("a", template_id="interact")
        provider.add("b", template_id="interact")
        with pytest.raises(GatewayError, match="unambiguous"):
            gateway.complete("hi", template_id="interact")

    def test_substring_matcher_disambiguates(self, config):
        gateway, provider = make_gateway(config)
        provider.add("first", template_id="interact", contains="alpha")
        provider.add("second", template_id="interact", contains="beta")
        assert gateway.complete("question about beta", template_id="interact") == "second"


class TestRetries:
    def test_transient_failures_retried(self, config):
        class Flaky:
            def __init__(self):
                self.calls = 0

            def complete(self, prompt, profile, template_id):
                self.calls += 1
                if self.calls < 3:
                    raise TransientProviderError("blip")
                return "ok"

        provider = Flaky()
        gateway = LLMGateway(provider=provider, config=config, sleeper=lambda s: None)
        assert gateway.complete("p") == "ok"
        assert provider.calls == 3

    def test_gateway_error_after_retry_limit(self, config):
        class Down:
            def complete(self, prompt, profile, template_id):
                raise TransientProviderError("network down")

        gateway = LLMGateway(provider=Down(), config=config, sleeper=lambda s: None)
        with pytest.raises(GatewayError, match="failed after"):
            gateway.complete("p")


class TestTokenOutput:
    def test_exact_token(self, config):
        gateway, provider = make_gateway(config)
        provider.add("LAMA", template_id="automl_router")
        assert gateway.complete_token("q", {"NO", "LAMA", "FEDOT"}, template_id="automl_router") == "LAMA"

    def test_normalization(self, config):
        gateway, provider = make_gateway(config)
        provider.add("  fedot.\n", template_id="automl_router")
        assert gateway.complete_token("q", {"NO", "LAMA", "FEDOT"}, template_id="automl_router") == "FEDOT"

    def test_ambiguous_after_repair_raises(self, config):
        gateway, provider = make_gateway(config)
        provider.add("maybe use both", template_id="automl_router")
        with pytest.raises(UnparseableToken):
            gateway.complete_token("q", {"NO", "LAMA", "FEDOT"}, template_id="automl_router")

    def test_repair_retry_can_recover(self, config):
        gateway, provider = make_gateway(config)
        provider.add("I would suggest either option", template_id="automl_router", contains="q about stuff")
        provider.add("LAMA", template_id="automl_router", contains="Answer with exactly one of")
        assert gateway.complete_token("q about stuff", {"NO", "LAMA", "FEDOT"}, template_id="automl_router") == "LAMA"

    @given(st.sampled_from(["NO", "LAMA", "FEDOT"]), st.text(alphabet=" \t.,;:!?", max_size=5))
    @settings(max_examples=60, deadline=None)
    def test_normalize_strips_punctuation(self, token, padding):
        assert normalize_token(padding + token.lower() + padding) == token

    @given(st.text(max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_normalize_idempotent(self, raw):
        assert normalize_token(normalize_token(raw)) == normalize_token(raw)


class TestJsonOutput:
    REQUIRED = {"task_type", "target", "task_metric"}

    def test_fenced_json(self, config):
        gateway, provider = make_gateway(config)
        provider.add(
            '```\n{"task_type":"reg","target":"y","task_metric":"r2-score"}\n```',
            template_id="automl_config",
        )
        obj = gateway.complete_json("p", self.REQUIRED, template_id="automl_config")
        assert obj == {"task_type": "reg", "target": "y", "task_metric": "r2-score"}

    def test_missing_keys(self, config):
        gateway, provider = make_gateway(config)
        provider.add("{}", template_id="automl_config")
        with pytest.raises(MissingKeys) as err:
            gateway.complete_json("p", self.REQUIRED, template_id="automl_config")
        assert err.value.keys == frozenset(self.REQUIRED)

    def test_trailing_prose_ignored(self, config):
        gateway, provider = make_gateway(config)
        provider.add(
            '{"task_type":"binary","target":"t","task_metric":"auc"} hope this helps!',
            template_id="automl_config",
        )
        obj = gateway.complete_json("p", self.REQUIRED, template_id="automl_config")
        assert obj["task_metric"] == "auc"

    def test_malformed_after_repair(self, config):
        gateway, provider = make_gateway(config)
        provider.add("not json at all", template_id="automl_config")
        with pytest.raises(MalformedJson):
            gateway.complete_json("p", self.REQUIRED, template_id="automl_config")

    def test_repair_retry_recovers(self, config):
        gateway, provider = make_gateway(config)
        provider.add("oops", template_id="automl_config", contains="first ask")
        provider.add(
            '{"task_type":"reg","target":"y","task_metric":"r2-score"}',
            template_id="automl_config",
            contains="Respond with only a JSON object",
        )
        obj = gateway.complete_json("first ask", self.REQUIRED, template_id="automl_config")
        assert obj["task_type"] == "reg"


def test_profile_validation():
    with pytest.raises(ValueError):
        ProviderProfile(provider_id="x", model_name="m", temperature=-1)
    with pytest.raises(ValueError):
        ProviderProfile(provider_id="x", model_name="m", timeout=0)


def test_scripted_mode_counts_calls_only(self=None, tmp_path=None):
    provider = ScriptedProvider([ScriptedExchange(response="ok")])
    gateway = LLMGateway(provider=provider, templates={})
    gateway.complete("anything")
    gateway.complete("anything else")
    assert provider.calls == 2
    assert [t for t, _ in provider.requests] == [None, None]
