#!/usr/bin/env python3
"""
Test script to verify the import structure of the app package.
Every in-package import must use the app.* prefix so that main.py, the test
files and `python -m app.cli` all resolve the same modules.
"""

import ast
import sys
from pathlib import Path

APP_DIR = Path(__file__).parent / 'app'


def package_modules():
    """Top-level names that would shadow app modules if imported bare."""
    names = {p.stem for p in APP_DIR.glob('*.py') if p.stem != '__init__'}
    names.add('utils')
    return names


def check_imports_in_file(filepath, modules=None):
    """Return a list of bare in-package imports found in a file."""
    modules = modules or package_modules()
    try:
        tree = ast.parse(filepath.read_text())
    except SyntaxError:
        return [f"syntax error in {filepath}"]

    issues = []
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
            if node.module.split('.')[0] in modules:
                issues.append(f"from {node.module}")
        elif isinstance(node, ast.Import):
            for alias in node.names:
                if alias.name.split('.')[0] in modules:
                    issues.append(f"import {alias.name}")
    return issues


def source_files():
    files = sorted(APP_DIR.glob('*.py')) + sorted((APP_DIR / 'utils').glob('*.py'))
    files += sorted(Path(__file__).parent.glob('test_*.py')) + [Path(__file__).parent / 'main.py']
    return files


def test_app_imports_use_package_prefix():
    modules = package_modules()
    bad = {f.name: check_imports_in_file(f, modules) for f in source_files()}
    assert not {k: v for k, v in bad.items() if v}


def main():
    """Main test function."""
    print("=" * 60)
    print("Testing Import Structure")
    print("=" * 60)

    modules = package_modules()
    all_correct = True
    for filepath in source_files():
        issues = check_imports_in_file(filepath, modules)
        if issues:
            all_correct = False
            print(f"  ❌ {filepath.name}:")
            for issue in issues:
                print(f"     - {issue}")
        else:
            print(f"  ✅ {filepath.name}: All imports correct")

    print("\n" + "=" * 60)
    if all_correct:
        print("✅ SUCCESS: All imports use correct app.* prefix")
    else:
        print("❌ FAILURE: Some imports need fixing")
        return 1

    print("=" * 60)
    return 0


if __name__ == "__main__":
    sys.exit(main())
