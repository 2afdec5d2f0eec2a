"""Deterministic generator of realistic rule texts for test corpora.

Builds detection rules from pools of real-world-shaped artifacts (paths,
mutexes, API names, URLs, hex stubs) plus controlled mutation operators:
variants (renames, metadata edits, comment/whitespace noise, small condition
tweaks) and mirages (string/condition material mixed in from an unrelated
rule). Everything is driven by an explicit random.Random so corpora are
reproducible from a seed.
"""

from __future__ import annotations

import random

FAMILIES = [
    "Emotet", "TrickBot", "QakBot", "Dridex", "IcedID", "Ursnif", "Zloader",
    "WannaCry", "Ryuk", "LockBit", "Conti", "BlackCat", "Hive", "Babuk",
    "RedLine", "Raccoon", "Vidar", "AzorUlt", "Lokibot", "Formbook",
    "AsyncRAT", "NanoCore", "Remcos", "NjRat", "Quasar", "Warzone",
    "Sunburst", "PlugX", "Kazuar", "ShadowPad", "Winnti", "Carbanak",
    "Mirai", "Gafgyt", "XMRig", "Kinsing", "Shlayer", "XCSSET",
    "BazarLoader", "SmokeLoader", "GuLoader", "Bumblebee", "AgentTesla",
    "HawkEye", "SnakeKeylogger", "Pony", "Amadey", "DanaBot", "Qbot",
    "Stealc", "Lumma", "Rhadamanthys", "DarkGate", "PikaBot", "Latrodectus",
]

PLATFORMS = ["Win32", "Win64", "Linux", "MacOS", "MSIL", "Android", "Generic", "ELF"]
KINDS = ["Loader", "Dropper", "Stealer", "Backdoor", "Banker", "Miner", "Worm",
         "Packed", "Config", "Beacon", "Module", "Payload", "Implant", "Injector"]

AUTHORS = [
    "threatintel-team", "malware-hunter", "cert-watch", "soc-detect", "dfir-unit",
    "intel-desk", "iot-watch", "community", "triage-bot", "sandbox-pipeline",
    "mail-gateway", "appsec", "joint-analysis", "abuse-desk", "night-shift",
]

TEXT_POOL = [
    "%s\\sysnative\\rundll32.exe", "Software\\Microsoft\\Windows\\CurrentVersion\\Run",
    "cmd.exe /c ping 127.0.0.1 -n 3", "schtasks /create /tn \\\"Updater\\\"",
    "POST /gate.php HTTP/1.1", "Content-Disposition: form-data; name=\\\"file\\\"",
    "SELECT * FROM moz_logins", "\\\\.\\pipe\\postex_", "Global\\\\MutexV7",
    "api.telegram.org/bot", "/tmp/.X11-lock.sock", "LD_PRELOAD=/lib/crond.so",
    "User-Agent: Mozilla/4.0 (compatible; MSIE 8.0)", "wevtutil cl Security",
    "HKEY_CURRENT_USER\\Software\\Classes\\mscfile", "%APPDATA%\\Update\\svc.dat",
    "taskkill /f /im MsMpEng.exe", "C:\\ProgramData\\Oracle\\update.ps1",
    "ngrok tcp 4444", "certutil -urlcache -split -f", "wallet.dat",
    "Cookies.sqlite", "\\\\Device\\\\PhysicalMemory", "install.bat",
    "Select-String -Pattern password", "ssh-rsa AAAAB3NzaC1yc2E",
    "process call create", "stratum+tcp://pool.", "/dev/shm/.cache-worker",
    "Sandboxie detected", "VBoxService.exe", "SbieDll.dll", "vmtoolsd.exe",
    "bitsadmin /transfer job", "export HISTFILE=/dev/null", "chattr +i",
    "main.unpacked.bin", "EnableLUA", "DisableAntiSpyware", "GetAsyncKeyState",
    "CryptEncrypt", "SetThreadContext", "NtUnmapViewOfSection", "amsi.dll",
]

URL_HOSTS = ["update-cdn", "files-static", "gate-panel", "api-metrics", "img-cache",
             "secure-dl", "svc-node", "edge-relay", "pkg-mirror", "stats-probe"]
TLDS = ["com", "net", "org", "io", "top", "xyz", "info"]

CONDITION_TAILS = [
    "filesize < 1MB", "filesize < 2MB", "filesize < 5MB",
    "uint16(0) == 0x5A4D", "uint32(0) == 0x464C457F", "filesize > 4KB",
]

META_EXTRAS = [
    ("tlp", "white"), ("tlp", "amber"), ("severity", "5"), ("severity", "8"),
    ("confidence", "high"), ("confidence", "medium"), ("license", "BSD-2-Clause"),
    ("malpedia_family", "auto"), ("sample_source", "honeypot"),
]


def _hex_bytes(rng: random.Random, n: int) -> str:
    parts = []
    for i in range(n):
        if i and rng.random() < 0.12:
            parts.append("??")
        else:
            parts.append(f"{rng.randrange(256):02X}")
    return " ".join(parts)


def _ident(rng: random.Random, taken: set[str]) -> str:
    stems = ["s", "a", "b", "c", "x", "str", "mz", "cfg", "key", "cmd", "url",
             "re", "hex", "op", "mark", "net", "dec", "blob", "tag", "mtx"]
    while True:
        name = rng.choice(stems) + (str(rng.randrange(1, 10)) if rng.random() < 0.8 else "")
        if name not in taken:
            taken.add(name)
            return name


class RuleFactory:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self._used_names: set[str] = set()

    def rule_name(self, family: str | None = None) -> str:
        rng = self.rng
        family = family or rng.choice(FAMILIES)
        while True:
            name = "_".join(
                [rng.choice(PLATFORMS), family, rng.choice(KINDS), str(rng.randrange(1, 100))]
            )
            if name not in self._used_names:
                self._used_names.add(name)
                return name

    def meta_block(self, family: str) -> list[tuple[str, str]]:
        rng = self.rng
        year = rng.randrange(2013, 2025)
        pairs = [
            ("description", f"Detects {family} {rng.choice(KINDS).lower()} artifacts"),
            ("author", rng.choice(AUTHORS)),
            ("reference", f"https://example.org/{family.lower()}-{year}"),
            ("date", f"{year}-{rng.randrange(1, 13):02d}-{rng.randrange(1, 29):02d}"),
        ]
        for extra in rng.sample(META_EXTRAS, rng.randrange(0, 3)):
            pairs.append(extra)
        return pairs

    def strings_block(self, n_text: int, n_hex: int, n_regex: int):
        rng = self.rng
        taken: set[str] = set()
        decls = []
        for _ in range(n_text):
            ident = _ident(rng, taken)
            value = rng.choice(TEXT_POOL)
            if rng.random() < 0.35:
                value = value + rng.choice(["_v2", ".tmp", "0", "-x64", "_dbg"])
            mods = rng.choice(["", " ascii", " wide", " fullword", " ascii wide",
                               " fullword ascii", " nocase ascii"])
            decls.append(f'${ident} = "{value}"{mods}')
        for _ in range(n_hex):
            ident = _ident(rng, taken)
            decls.append(f"${ident} = {{ {_hex_bytes(rng, rng.randrange(6, 14))} }}")
        for _ in range(n_regex):
            ident = _ident(rng, taken)
            host = rng.choice(URL_HOSTS)
            tld = rng.choice(TLDS)
            decls.append(
                f"${ident} = /https?:\\/\\/{host}[0-9a-z]{{2,8}}\\.{tld}\\/[a-z]{{3,9}}\\.php/ nocase"
            )
        rng.shuffle(decls)
        return decls

    def condition(self, decls: list[str]) -> str:
        rng = self.rng
        idents = [d.split(" ", 1)[0] for d in decls]
        n = len(idents)
        style = rng.randrange(5)
        if style == 0:
            body = "any of them" if n else "true"
        elif style == 1:
            body = f"{max(1, min(n, rng.randrange(1, 4)))} of them"
        elif style == 2 and n >= 2:
            body = f"({idents[0]} and {idents[1]})" + (f" or {idents[-1]}" if n >= 3 else "")
        elif style == 3 and n >= 2:
            body = f"{idents[0]} and {rng.randrange(2, 4)} of them"
        else:
            body = "any of them" if n else "true"
        if rng.random() < 0.55:
            body = f"{rng.choice(CONDITION_TAILS)} and ({body})"
        return body

    def rule(self, family: str | None = None, min_strings: int = 4) -> str:
        rng = self.rng
        family = family or rng.choice(FAMILIES)
        name = self.rule_name(family)
        tags = ""
        if rng.random() < 0.3:
            tags = " : " + " ".join(rng.sample(["apt", "crimeware", "loader", "ransomware",
                                                "stealer", "banker", "iot"], rng.randrange(1, 3)))
        meta = self.meta_block(family)
        n_text = rng.randrange(max(2, min_strings - 2), min_strings + 4)
        n_hex = rng.randrange(0, 3)
        n_regex = rng.randrange(0, 2)
        decls = self.strings_block(n_text, n_hex, n_regex)
        cond = self.condition(decls)
        meta_lines = "\n".join(f'        {k} = "{v}"' for k, v in meta)
        decl_lines = "\n".join(f"        {d}" for d in decls)
        return (
            f"rule {name}{tags} {{\n"
            f"    meta:\n{meta_lines}\n"
            f"    strings:\n{decl_lines}\n"
            f"    condition:\n        {cond}\n"
            f"}}\n"
        )


# --- mutation operators -------------------------------------------------------

def rename_identifiers(rng: random.Random, text: str, share: float = 0.5) -> str:
    """Rename a share of the $identifiers, keeping lengths similar."""
    import re

    idents = sorted({m.group(1) for m in re.finditer(r"\$([A-Za-z0-9_]+)", text)})
    if not idents:
        return text
    k = max(1, round(len(idents) * share))
    chosen = rng.sample(idents, min(k, len(idents)))
    out = text
    for ident in sorted(chosen, key=len, reverse=True):
        # same-length replacement: the kind of rename forks actually do
        fresh = "".join(rng.choice("abcdefghjkmnpqrstuvwxyz") for _ in range(max(1, len(ident))))
        out = re.sub(rf"\${ident}\b", f"${fresh}", out)
    out = re.sub(r"rule\s+([A-Za-z0-9_]+)", lambda m: f"rule {m.group(1)}_fork{rng.randrange(100)}", out, count=1)
    return out


def edit_metadata(rng: random.Random, text: str, rename: bool = True) -> str:
    """Change meta values (and optionally the rule name); logic untouched."""
    import re

    out = re.sub(r'author = "[^"]*"', f'author = "{rng.choice(AUTHORS)}"', text)
    out = re.sub(r'date = "[^"]*"',
                 f'date = "{rng.randrange(2015, 2025)}-{rng.randrange(1, 13):02d}-01"', out)
    out = re.sub(r'description = "([^"]*)"', r'description = "\1 (mirrored copy)"', out)
    if rename:
        out = re.sub(r"rule\s+([A-Za-z0-9_]+)",
                     lambda m: f"rule {m.group(1)}_copy{rng.randrange(100)}", out, count=1)
    return out


def add_noise(rng: random.Random, text: str) -> str:
    """Comment and whitespace noise; canonicalization should erase it."""
    lines = text.split("\n")
    out = []
    for line in lines:
        out.append(line.replace("    ", "\t") if rng.random() < 0.3 else line)
        if line.strip() and rng.random() < 0.15:
            out.append(f"        // {rng.choice(['reviewed', 'TODO verify', 'from upstream', 'sync 2024'])}")
    if rng.random() < 0.6:
        out.insert(0, "/* imported from shared feed */")
    return "\n".join(out)


def tweak_condition(rng: random.Random, text: str) -> str:
    """Small logic adjustment: change an of-count or append a size guard."""
    import re

    def bump(m):
        return f"{int(m.group(1)) + 1} of them"

    out, n = re.subn(r"(\d+) of them", bump, text, count=1)
    if n == 0:
        out = re.sub(
            r"condition:\n(\s+)(.+?)\n\}",
            lambda m: f"condition:\n{m.group(1)}filesize < 3MB and ({m.group(2)})\n}}",
            text,
            flags=re.S,
        )
    return out


def tweak_strings(rng: random.Random, text: str) -> str:
    """Replace one string value with a near variant of itself."""
    import re

    decls = list(re.finditer(r'\$([A-Za-z0-9_]+) = "([^"\n]+)"', text))
    if not decls:
        return text
    target = rng.choice(decls)
    new_value = target.group(2) + rng.choice(["x", "2", "_"])
    start, end = target.span(2)
    return text[:start] + new_value + text[end:]


def make_variant(rng: random.Random, text: str) -> str:
    """A true near-duplicate: the kinds of edits mirrors actually make."""
    roll = rng.random()
    if roll < 0.30:
        return edit_metadata(rng, text)
    if roll < 0.45:
        return add_noise(rng, edit_metadata(rng, text))
    if roll < 0.65:
        return rename_identifiers(rng, text, share=rng.uniform(0.2, 0.5))
    if roll < 0.80:
        return rename_identifiers(rng, text, share=1.0)
    if roll < 0.92:
        return tweak_condition(rng, rename_identifiers(rng, text, share=0.4))
    return tweak_strings(rng, rename_identifiers(rng, text, share=0.6))


def make_mirage(rng: random.Random, parent: str, donor: str, factory: RuleFactory) -> str:
    """A look-alike that is logically unrelated: parent skeleton, donor logic.

    Takes the parent's frame and some of its strings but swaps in a chunk of
    the donor's string declarations (and often its condition), producing text
    that resembles both without sharing either one's detection logic.
    """
    import re

    def decls_of(text):
        m = re.search(r"strings:\n(.*?)\n\s+condition:", text, re.S)
        return [line for line in m.group(1).split("\n") if line.strip()] if m else []

    p_decls = decls_of(parent)
    d_decls = decls_of(donor)
    if not p_decls or not d_decls:
        return parent
    keep = max(1, round(len(p_decls) * rng.uniform(0.45, 0.60)))
    borrowed = d_decls[: max(2, len(p_decls) - keep)]
    kept = p_decls[:keep]
    # only re-sigil on identifier collisions; verbatim borrows keep the
    # donor-lookalike texture that makes mirages hard
    taken = {re.match(r"\s*\$([A-Za-z0-9_]*)", d).group(1) for d in kept}
    fixed = []
    for i, line in enumerate(borrowed):
        ident = re.match(r"\s*\$([A-Za-z0-9_]*)", line).group(1)
        if ident in taken:
            line = re.sub(r"\$([A-Za-z0-9_]*)", f"$m{i}_{rng.randrange(10, 99)}", line, count=1)
        fixed.append(line)
    decl_block = "\n".join(kept + fixed)

    cond_src = donor if rng.random() < 0.5 else parent
    cond = re.search(r"condition:\n\s+(.+?)\n\}", cond_src, re.S).group(1)
    # references into either source may dangle; fall back to a generic form
    if re.search(r"[$#@!][A-Za-z0-9_]", cond):
        cond = "any of them"

    name = factory.rule_name()
    meta = re.search(r"meta:\n(.*?)\n\s+strings:", parent, re.S).group(1)
    return (
        f"rule {name} {{\n"
        f"    meta:\n{meta}\n"
        f"    strings:\n{decl_block}\n"
        f"    condition:\n        {cond}\n"
        f"}}\n"
    )


def make_benchmark(seed: int, n_originals: int = 110, variants_per: int = 2, mirages_per: int = 2):
    """Benchmark entries [(entry_id, text, label, parent_id)] per the recipe."""
    rng = random.Random(seed)
    factory = RuleFactory(rng)
    entries = []
    originals = []
    for i in range(n_originals):
        text = factory.rule(min_strings=5)
        eid = f"orig{i:04d}"
        originals.append((eid, text))
        entries.append((eid, text, "original", None))
    for i, (pid, ptext) in enumerate(originals):
        for j in range(variants_per):
            entries.append((f"var{i:04d}_{j}", make_variant(rng, ptext), "variant", pid))
    for i, (pid, ptext) in enumerate(originals):
        for j in range(mirages_per):
            donor = originals[rng.randrange(len(originals))]
            while donor[0] == pid:
                donor = originals[rng.randrange(len(originals))]
            entries.append(
                (f"mir{i:04d}_{j}", make_mirage(rng, ptext, donor[1], factory), "mirage", pid)
            )
    return entries


def make_cluster_corpus(seed: int, n_clusters: int = 30, max_copies: int = 6):
    """Corpus of near-duplicate groups: [(rule_id, text, group_index)].

    The mix mirrors how rules actually spread: mostly byte-identical file
    copies, plus metadata edits, comment noise and occasional tail tweaks;
    head-of-rule edits (renames) are the rare case.
    """
    rng = random.Random(seed)
    factory = RuleFactory(rng)
    out = []
    for g in range(n_clusters):
        base = factory.rule(min_strings=5)
        out.append((f"g{g:03d}_r000", base, g))
        for c in range(rng.randrange(1, max_copies)):
            roll = rng.random()
            if roll < 0.55:
                text = base  # byte-for-byte mirror copy
            elif roll < 0.75:
                text = edit_metadata(rng, base, rename=False)
            elif roll < 0.90:
                text = add_noise(rng, base)
            elif roll < 0.98:
                text = tweak_condition(rng, base)
            else:
                text = rename_identifiers(rng, base, share=0.4)
            out.append((f"g{g:03d}_r{c + 1:03d}", text, g))
    return out


def make_shared_prefix_corpus(seed: int, n_rules: int = 40):
    """Rules sharing name and a long strings prefix; tails differ slightly.

    Built so every signature lands in one block: identical text through well
    past the first 24 digest pieces, and lengths inside one blocksize band.
    """
    rng = random.Random(seed)
    factory = RuleFactory(rng)
    common = factory.strings_block(10, 2, 0)
    out = []
    for i in range(n_rules):
        extra = [
            f'$t{k} = "{rng.choice(TEXT_POOL)}{rng.randrange(100)}"'
            for k in range(rng.randrange(1, 3))
        ]
        decl_lines = "\n".join(f"        {d}" for d in common + extra)
        out.append(
            (
                f"p{i:03d}",
                f"rule SharedFeedEntry {{\n    strings:\n{decl_lines}\n"
                f"    condition:\n        any of them\n}}\n",
            )
        )
    return out
