def main():
    n = int(input())
    values = [int(v) for v in input().split()[:n]]
    total = 0
    for v in values:
        if v > 0:
            total += v
        else:
            for k in range(40):
                total += k * v
    print(total)


main()
