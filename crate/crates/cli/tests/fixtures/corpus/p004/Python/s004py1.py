# min solution 1
n, y = map(int, input().split())
print(min(n, y))
