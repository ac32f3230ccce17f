def dedupe(records):
    seen = set()
    unique = []
    for r in records:
        if r not in seen:
            seen.add(r)
            unique.append(r)
    return unique


def main():
    n = int(input())
    raw = input().split()[:n]
    records = [r.strip().lower() for r in raw]
    print(" ".join(dedupe(records)))


main()
