"""
测试辅助工具

测试文件中的 test_* 函数既可以被 pytest 收集，也可以直接运行脚本：

    python tests/test_xxx.py

直接运行时逐个执行 test_* 函数，输出 ✅/❌ 并给出总结。
退出码：0 表示全部通过，1 表示有失败，2 表示全部被跳过。
"""

import sys
import traceback
import unittest


def run_tests(title: str, namespace: dict):
    """
    运行命名空间中所有 test_* 函数（按定义顺序）

    Args:
        title: 测试标题
        namespace: 通常传入 globals()
    """
    print("=" * 60)
    print(title)
    print("=" * 60)
    print()

    tests = [(name, obj) for name, obj in namespace.items() if name.startswith('test_') and callable(obj)]
    test_count = pass_count = skip_count = 0

    for name, func in tests:
        test_count += 1
        label = (func.__doc__ or name).strip().splitlines()[0]
        try:
            func()
        except unittest.SkipTest as e:
            skip_count += 1
            print(f"⚠️  测试 {test_count}: {label} - 跳过")
            print(f"   {e}")
        except Exception as e:
            print(f"❌ 测试 {test_count}: {label} - 失败")
            print(f"   {type(e).__name__}: {e}")
            traceback.print_exc(limit=3, file=sys.stdout)
        else:
            pass_count += 1
            print(f"✅ 测试 {test_count}: {label}")
        print()

    print("=" * 60)
    print(f"测试总结: {pass_count}/{test_count} 通过, {skip_count} 跳过")
    print("=" * 60)

    if test_count and skip_count == test_count:
        print("\n⚠️  所有测试被跳过\n")
        sys.exit(2)
    if pass_count + skip_count == test_count:
        print(f"\n✅ 所有{title}通过！\n")
        sys.exit(0)
    print(f"\n❌ 有 {test_count - pass_count - skip_count} 个测试失败\n")
    sys.exit(1)
