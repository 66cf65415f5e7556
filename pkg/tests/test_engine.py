import pytest

from schemaguide.engine import (
    CacheInvalidate,
    DecodingSession,
    StepMask,
    build_trie,
    run_session,
    selection_strings,
    trie_allowed,
    trie_step,
    trie_survivors,
)
from schemaguide.errors import (
    DisallowedToken,
    GenerationStuck,
    MalformedSchema,
    NoCandidates,
)
from schemaguide.generator import MockGreedy, Scripted

from helpers import ids, run_scripted


def feed(session, vocab, text):
    for tid in vocab.encode(text):
        session.advance(tid)


def mask_texts(session, vocab):
    mask = session.next_mask()
    assert not mask.is_forced
    return sorted(
        "<EOS>" if t == vocab.eos_id else vocab.id_to_token(t) for t in mask.allowed
    )


def forced_text(session, vocab):
    mask = session.next_mask()
    assert mask.is_forced
    return vocab.decode(list(mask.forced))


# ---------------------------------------------------------------------------
# masks and tries


def test_stepmask_exactly_one_side():
    with pytest.raises(ValueError):
        StepMask()
    with pytest.raises(ValueError):
        StepMask(allowed=frozenset({1}), forced=(2,))
    with pytest.raises(ValueError):
        StepMask(allowed=frozenset())
    with pytest.raises(ValueError):
        StepMask(forced=())
    assert StepMask(allowed=frozenset({1})).is_forced is False
    assert StepMask(forced=(1, 2)).is_forced is True


def test_trie_narrowing(vocab):
    trie = build_trie(["gopass", "lpass", "last"], vocab)
    assert sorted(vocab.id_to_token(t) for t in trie_allowed(trie)) == ["g", "l"]
    trie = trie_step(trie, vocab.token_to_id("l"))
    assert sorted(trie_survivors(trie)) == ["last", "lpass"]
    assert sorted(vocab.id_to_token(t) for t in trie_allowed(trie)) == ["a", "p"]
    trie = trie_step(trie, vocab.token_to_id("a"))
    assert trie_survivors(trie) == ["last"]


def test_selection_strings_bash(bash_schemas, bash_profile):
    picks = [bash_schemas.get(n) for n in ("fastboot", "cp", "git mv")]
    strings = [p for p, _, _ in selection_strings(picks, bash_profile)]
    assert strings == ["fastboot", "cp", "git mv"]


def test_selection_strings_yaml(yaml_schemas, yaml_profile):
    picks = [yaml_schemas.get("ansible.builtin.file")]
    strings = [p for p, _, _ in selection_strings(picks, yaml_profile)]
    assert strings == ["ansible.builtin.file:"]


def test_selection_strings_reject_duplicates(bash_schemas, bash_profile):
    cp = bash_schemas.get("cp")
    with pytest.raises(MalformedSchema):
        selection_strings([cp, cp], bash_profile)


def test_no_candidates(bash_profile, vocab):
    with pytest.raises(NoCandidates):
        DecodingSession([], bash_profile, vocab)


def test_unique_survivor_forces_remainder(bash_schemas, bash_profile, vocab):
    picks = [bash_schemas.get(n) for n in ("gopass", "lpass", "last")]
    session = DecodingSession(picks, bash_profile, vocab)
    assert mask_texts(session, vocab) == ["g", "l"]
    feed(session, vocab, "l")
    assert mask_texts(session, vocab) == ["a", "p"]
    feed(session, vocab, "a")
    assert forced_text(session, vocab) == "st"


# ---------------------------------------------------------------------------
# bash walk


def test_mandatory_choice_masks(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("fastboot")], bash_profile, vocab)
    feed(session, vocab, "fastboot ")
    assert mask_texts(session, vocab) == ["e", "f", "r"]
    feed(session, vocab, "flash")
    assert mask_texts(session, vocab) == ["a", "i"]
    feed(session, vocab, "a")
    assert forced_text(session, vocab) == "ll"


def test_choice_dependency_keyword(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("fastboot")], bash_profile, vocab)
    feed(session, vocab, "fastboot reboot")
    assert mask_texts(session, vocab) == [" ", "<EOS>"]
    feed(session, vocab, " ")
    assert mask_texts(session, vocab) == ["-", "<EOS>", "b", "|"]
    feed(session, vocab, "b")
    assert forced_text(session, vocab) == "ootloader"


def test_dependency_keyword_is_one_shot(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("fastboot")], bash_profile, vocab)
    feed(session, vocab, "fastboot erase ")
    assert mask_texts(session, vocab) == ["-", "<EOS>", "c", "s", "u", "|"]
    feed(session, vocab, "userdata ")
    assert mask_texts(session, vocab) == ["-", "<EOS>", "|"]


def test_dependency_keyword_survives_flags(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("fastboot")], bash_profile, vocab)
    feed(session, vocab, "fastboot erase -w ")
    assert mask_texts(session, vocab) == ["-", "<EOS>", "c", "s", "u", "|"]


def test_flag_dedupe(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("nl")], bash_profile, vocab)
    feed(session, vocab, "nl -b -")
    assert mask_texts(session, vocab) == ["s", "w"]


def test_flag_dedupe_off(bash_schemas, bash_profile, vocab):
    session = DecodingSession(
        [bash_schemas.get("nl")], bash_profile, vocab, dedupe_flags=False
    )
    feed(session, vocab, "nl -b -")
    assert mask_texts(session, vocab) == ["b", "s", "w"]


def test_exhausted_flag_pool_drops_dash(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("nl")], bash_profile, vocab)
    feed(session, vocab, "nl -b -s -w ")
    assert mask_texts(session, vocab) == ["{"]


def test_double_dash_narrows_to_long_flags(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("fastboot")], bash_profile, vocab)
    feed(session, vocab, "fastboot reboot bootloader --")
    assert forced_text(session, vocab) == "verbose"


def test_literal_free_args(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("cp")], bash_profile, vocab)
    feed(session, vocab, "cp ")
    assert mask_texts(session, vocab) == ["-", "{"]
    feed(session, vocab, "{{src}} {{dest}}")
    session.advance(vocab.eos_id)
    assert session.done
    assert vocab.decode(session.emitted) == "cp {{src}} {{dest}}"


def test_model_free_args(bash_schemas, bash_profile, vocab):
    session = DecodingSession(
        [bash_schemas.get("cp")], bash_profile, vocab, free_arg_mode="model"
    )
    feed(session, vocab, "cp ")
    mask = session.next_mask()
    assert vocab.token_to_id("d") in mask.allowed
    assert vocab.token_to_id(" ") not in mask.allowed
    feed(session, vocab, "data.txt backup.txt")
    session.advance(vocab.eos_id)
    assert session.done
    assert vocab.decode(session.emitted) == "cp data.txt backup.txt"


def test_max_free_len_caps_content(bash_schemas, bash_profile, vocab):
    session = DecodingSession(
        [bash_schemas.get("cp")],
        bash_profile,
        vocab,
        free_arg_mode="model",
        max_free_len=2,
    )
    feed(session, vocab, "cp ab")
    mask = session.next_mask()
    assert vocab.token_to_id("c") not in mask.allowed
    assert vocab.token_to_id(" ") in mask.allowed


def test_disallowed_token_rejected(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("cp")], bash_profile, vocab)
    feed(session, vocab, "cp ")
    with pytest.raises(DisallowedToken):
        session.advance(vocab.token_to_id(" "))


def test_finished_session_rejects_tokens(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("cp")], bash_profile, vocab)
    feed(session, vocab, "cp {{src}} {{dest}}")
    session.advance(vocab.eos_id)
    with pytest.raises(DisallowedToken):
        session.advance(vocab.eos_id)


def test_fastboot_scripted_trace(bash_schemas, bash_profile, vocab):
    picks = [bash_schemas.get("fastboot"), bash_schemas.get("cp")]
    session, output, events = run_scripted(
        picks, bash_profile, vocab, ["f", "r", " ", "b", "<EOS>"]
    )
    assert output == "fastboot reboot bootloader"
    assert session.healed == 0
    assert session.segments == ["fastboot"]
    assert events == 0


def test_pipe_restarts_selection(bash_schemas, bash_profile, vocab):
    picks = [bash_schemas.get("nl"), bash_schemas.get("cut")]
    script = ["n", " ", "{", " ", "|", "c", " ", "{", "<EOS>"]
    session, output, _ = run_scripted(picks, bash_profile, vocab, script)
    # the required -f is appended on the termination attempt
    assert output == "nl {{file}} | cut {{file}} -f"
    assert session.segments == ["nl", "cut"]
    assert session.healed == 0
    assert bash_profile.validate(output, bash_schemas.get("nl")) == []
    assert bash_profile.validate(output, bash_schemas.get("cut")) == []


def test_pipes_disabled(bash_schemas, bash_profile, vocab):
    session = DecodingSession(
        [bash_schemas.get("nl")], bash_profile, vocab, allow_pipes=False
    )
    feed(session, vocab, "nl {{file}}")
    assert "|" not in mask_texts(session, vocab)


# ---------------------------------------------------------------------------
# yaml walk


def test_yaml_single_candidate_forces_module_line(yaml_schemas, yaml_profile, vocab):
    session = DecodingSession(
        [yaml_schemas.get("ansible.builtin.file")], yaml_profile, vocab
    )
    assert forced_text(session, vocab) == "ansible.builtin.file:"


def test_yaml_key_trie_and_choice_value(yaml_schemas, yaml_profile, vocab):
    session = DecodingSession(
        [yaml_schemas.get("ansible.builtin.file")], yaml_profile, vocab
    )
    feed(session, vocab, "ansible.builtin.file:\n    ")
    assert mask_texts(session, vocab) == ["g", "m", "o", "p", "r", "s"]
    feed(session, vocab, "state: ")
    assert mask_texts(session, vocab) == ["a", "d", "f", "h", "l", "t"]
    feed(session, vocab, "t")
    assert forced_text(session, vocab) == "ouch\n"


def test_yaml_int_value_digits_only(yaml_schemas, yaml_profile, vocab):
    session = DecodingSession(
        [yaml_schemas.get("community.general.make")], yaml_profile, vocab
    )
    feed(session, vocab, "community.general.make:\n    jobs: ")
    mask = session.next_mask()
    assert vocab.token_to_id("4") in mask.allowed
    assert vocab.token_to_id("a") not in mask.allowed
    assert vocab.token_to_id("\n") not in mask.allowed
    feed(session, vocab, "4")
    assert vocab.token_to_id("\n") in session.next_mask().allowed


def test_yaml_bool_value_trie(yaml_schemas, yaml_profile, vocab):
    session = DecodingSession(
        [yaml_schemas.get("ansible.builtin.file")], yaml_profile, vocab
    )
    feed(session, vocab, "ansible.builtin.file:\n    recurse: ")
    assert mask_texts(session, vocab) == ["f", "n", "t", "y"]
    feed(session, vocab, "y")
    assert forced_text(session, vocab) == "es\n"


def test_yaml_free_dict_keys(yaml_schemas, yaml_profile, vocab):
    session = DecodingSession(
        [yaml_schemas.get("community.general.make")], yaml_profile, vocab
    )
    feed(session, vocab, "community.general.make:\n    params:\n      ")
    mask = session.next_mask()
    assert vocab.token_to_id(":") not in mask.allowed
    feed(session, vocab, "K")
    assert vocab.token_to_id(":") in session.next_mask().allowed
    feed(session, vocab, ": 1\n      K")
    # a second "K" key is withheld the colon until the name diverges
    mask = session.next_mask()
    assert vocab.token_to_id(":") not in mask.allowed
    assert vocab.token_to_id("2") in mask.allowed


def test_yaml_indent_backtrack(yaml_schemas, yaml_profile, vocab):
    make = yaml_schemas.get("community.general.make")
    prompt = yaml_profile.format_prompt("run make")
    prompt_ids = vocab.encode(prompt)
    session = DecodingSession(
        [make], yaml_profile, vocab, prompt_len=len(prompt_ids)
    )
    feed(session, vocab, "community.general.make:\n   ")
    emitted_before = len(session.emitted)
    feed(session, vocab, "c")
    events = session.pop_events()
    assert events == [
        CacheInvalidate(keep_prefix_len=len(prompt_ids) + emitted_before - 3)
    ]
    assert vocab.decode(session.emitted) == "community.general.make:\n    c"
    feed(session, vocab, "hdir: /a\n")
    session.advance(vocab.eos_id)
    assert session.done
    assert session.healed == 0
    out = yaml_profile.assemble_output(prompt, vocab.decode(session.emitted))
    assert out == "- name: run make\n  community.general.make:\n    chdir: /a\n"
    assert yaml_profile.validate(out, make) == []


def test_yaml_backtrack_scripted(yaml_schemas, yaml_profile, vocab):
    make = yaml_schemas.get("community.general.make")
    script = ["\n", " ", " ", " ", "c", "/", "a", "\n", "<EOS>"]
    session, output, events = run_scripted(
        [make], yaml_profile, vocab, script, query="run make"
    )
    assert events == 1
    assert session.healed == 0
    assert output == "- name: run make\n  community.general.make:\n    chdir: /a\n"


def test_yaml_eos_drains_required(yaml_schemas, yaml_profile, vocab):
    filemod = yaml_schemas.get("ansible.builtin.file")
    session = DecodingSession([filemod], yaml_profile, vocab)
    feed(session, vocab, "ansible.builtin.file:\n")
    session.advance(vocab.eos_id)
    assert forced_text(session, vocab) == "    path: "
    feed(session, vocab, "    path: /tmp\n")
    session.advance(vocab.eos_id)
    assert session.done
    assert vocab.decode(session.emitted) == "ansible.builtin.file:\n    path: /tmp\n"


def test_yaml_eos_drains_nested_required(yaml_schemas, yaml_profile, vocab):
    rules = yaml_schemas.get("cisco.ise.device_admin_authentication_rules")
    session = DecodingSession([rules], yaml_profile, vocab)
    feed(session, vocab, "cisco.ise.device_admin_authentication_rules:\n    link:\n")
    session.advance(vocab.eos_id)
    assert forced_text(session, vocab) == "      href: "
    feed(session, vocab, "      href: h\n")
    assert forced_text(session, vocab) == "    ise_hostname: "
    feed(session, vocab, "    ise_hostname: x\n")
    session.advance(vocab.eos_id)
    assert session.done
    completion = vocab.decode(session.emitted)
    assert completion == (
        "cisco.ise.device_admin_authentication_rules:\n"
        "    link:\n      href: h\n    ise_hostname: x\n"
    )
    out = yaml_profile.assemble_output(yaml_profile.format_prompt("q"), completion)
    assert yaml_profile.validate(out, rules) == []


def test_yaml_repair_substitutes_foreign_key(yaml_schemas, yaml_profile, vocab):
    rules = yaml_schemas.get("cisco.ise.device_admin_authentication_rules")
    session = DecodingSession([rules], yaml_profile, vocab)
    feed(
        session,
        vocab,
        "cisco.ise.device_admin_authentication_rules:\n    link:\n      href: h\n  ",
    )
    # two spaces sit between levels 4 and 6; "t" belongs to the deeper level
    session.advance(vocab.token_to_id("t"))
    assert session.healed == 1
    assert len(session.pop_events()) == 1
    # repaired to level 4, whose lowest-id key first is "i"
    assert vocab.decode(session.emitted).endswith("\n    i")


# ---------------------------------------------------------------------------
# run loop


def test_run_session_heals_disallowed_proposal(bash_schemas, bash_profile, vocab):
    picks = [bash_schemas.get("fastboot"), bash_schemas.get("cp")]
    session = DecodingSession(picks, bash_profile, vocab)
    adapter = Scripted(vocab, ids(vocab, ["x"]))
    run_session(session, adapter, [])
    assert session.healed >= 1
    assert session.done
    # min(allowed) at the first fork is "c", so the cp arm was taken
    assert session.segments[0] == "cp"


def test_run_session_step_cap(bash_schemas, bash_profile, vocab):
    session = DecodingSession([bash_schemas.get("cp")], bash_profile, vocab)
    adapter = MockGreedy(vocab)
    with pytest.raises(GenerationStuck):
        run_session(session, adapter, [], max_steps=1)
